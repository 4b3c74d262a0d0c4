"""Desk-scale LoRA fine-tuning and greedy inference for SFT datasets."""
