"""Symbolic controller synthesis for plants behind shared digital networks.

The toolkit turns a continuous-time plant, a quantizer, and a set of network
timing bounds into a finite symbolic model, synthesizes a maximal correct
controller against a finite path specification, and refines it into an
executable quantized-feedback machine whose closed-loop traces can be
simulated and certified.
"""

__version__ = "0.1.0"
