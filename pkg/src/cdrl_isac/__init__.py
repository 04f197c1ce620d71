"""Time allocation between radar tracking and communication in an ISAC system.

Submodules: ``motion``, ``sensing``, ``ekf`` and ``comms`` model the physics;
``qnet`` and ``cdrl`` hold the learner; ``scenario``, ``baselines``, ``env``
and ``harness`` run experiments; ``cli`` is the command-line front end.
"""

__version__ = "0.1.0"
