"""Neuroevolution of cue-switched multi-behavior policies."""
