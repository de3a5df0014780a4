"""klab: exact module theory over Z/p^k and Stark/Kolyvagin system checks."""
__version__ = "0.1.0"
