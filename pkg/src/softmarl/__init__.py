"""Multiagent soft Q-learning and a MADDPG baseline on a continuous cooperative game."""
__version__ = "0.1.0"
