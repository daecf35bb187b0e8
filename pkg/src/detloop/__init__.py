"""detloop: a deterministic event-loop runtime.

Scripts run on a clock that advances per executed opcode, auxiliary work is
delivered through a priority queue at pre-computed times, and an attack
harness checks that timing measurements stay constant across machines.
"""

__version__ = "0.1.0"
