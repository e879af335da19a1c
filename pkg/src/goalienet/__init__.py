"""Joint goalie, equipment and net keypoint estimation."""

__version__ = "0.1.0"
