"""Proprioceptive imitation from observation: PPO policies over internal state,
rewarded by a convolutional discriminator that compares imitator video with
video-only expert demonstrations."""

__version__ = "0.1.0"
