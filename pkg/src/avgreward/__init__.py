"""Average-reward reinforcement learning for continuing MDPs."""
