"""behaviorkit: posture-independent behavior representations for skeletal motion.

The package trains a conditional sequence autoencoder whose latent code
captures *what a body is doing* independently of *where it starts from*,
then reuses that code for behavior transfer between actors, latent
interpolation, and open-ended sampling through a normalizing flow.
Everything runs on float64 numpy via a small reverse-mode autodiff core,
so results are bit-reproducible given a seed.
"""

__version__ = "0.1.0"
