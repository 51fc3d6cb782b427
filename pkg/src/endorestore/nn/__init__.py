"""Residual UNet restorer: layers, model, losses, optimizer, training and checkpoints."""
