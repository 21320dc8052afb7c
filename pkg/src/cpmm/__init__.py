"""Capability-priced micro-market stack.

Desk-scale implementation of an agent micro-market: economic agent models,
bandit pricing, a budget-capped VCG combinatorial auction, a 10-step
negotiation state machine with economic guards, the X402/H402 payment wire
protocol with escrow and refunds, privacy-elasticity calculus, and a
repeated bilateral-game market simulator with an experiment harness.
"""

__version__ = "0.1.0"
