"""Determined convolutive source separation: ILRMA, FastMNMF and FastMNMF
with an ILRMA prior on the joint-diagonalization matrices.

>>> from fastbss import SceneConfig, make_scene, stft, run_regularized_fastmnmf
>>> scene = make_scene(SceneConfig(seed=0))
>>> X = stft(scene.mixture)
>>> result = run_regularized_fastmnmf(X, n_iter=100)
"""

from .evaluation import SdrReport, best_permutation_sdr, sdr, sdr_improvement
from .exceptions import *  # noqa: F403
from .fastmnmf import FastModel, SeparationResult, fastmnmf_cost, run_fastmnmf
from .ilrma import IlrmaResult, project_back, run_ilrma
from .mixsim import MixtureScene, SceneConfig, make_scene, rank1_scene, synth_rir
from .regufast import RegularizerSchedule, lambda_at, regularized_cost, run_regularized_fastmnmf
from .signal import StftConfig, Waveform, istft, read_wav, stft, write_wav

__version__ = "0.1.0"
