"""scikit-learn style wrapper around training and greedy control.

``fit`` trains on self-generated experience (``X`` is ignored), ``predict``
maps control-actor observation rows to greedy (move, turn) commands and
``score`` is the completed-object ratio on the configured scenario.
"""
from __future__ import annotations

import tempfile
from typing import Optional

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .nets import ActionDistribution, load_checkpoint
from .obs import LOW_OBS_DIM, ObsConfig
from .trainer import PpoConfig, TrainSetup, train
from .world import ScenarioConfig


class TIHDP(BaseEstimator):
    def __init__(
        self,
        variant: str = "tihdp-with-com",
        n_robots: int = 3,
        n_light: int = 2,
        n_medium: int = 1,
        n_heavy: int = 1,
        J: int = 2,
        K: int = 2,
        hidden: tuple = (256, 128, 64),
        total_steps: int = 50_000,
        n_envs: int = 64,
        learning_rate: float = 3e-4,
        k_phi: float = 0.1,
        episode_length: int = 400,
        eval_episodes: int = 32,
        random_state: int = 0,
        out_dir: Optional[str] = None,
    ):
        self.variant = variant
        self.n_robots = n_robots
        self.n_light = n_light
        self.n_medium = n_medium
        self.n_heavy = n_heavy
        self.J = J
        self.K = K
        self.hidden = hidden
        self.total_steps = total_steps
        self.n_envs = n_envs
        self.learning_rate = learning_rate
        self.k_phi = k_phi
        self.episode_length = episode_length
        self.eval_episodes = eval_episodes
        self.random_state = random_state
        self.out_dir = out_dir

    def _scenario(self) -> ScenarioConfig:
        return ScenarioConfig(
            n_robots=self.n_robots, n_light=self.n_light, n_medium=self.n_medium,
            n_heavy=self.n_heavy, episode_length=self.episode_length,
        )

    def _setup(self) -> TrainSetup:
        return TrainSetup(
            scenario=self._scenario(),
            obs=ObsConfig(J=self.J, K=self.K),
            ppo=PpoConfig(total_steps=self.total_steps, n_envs=self.n_envs, learning_rate=self.learning_rate),
            variant=self.variant,
            hidden=tuple(self.hidden),
            k_phi=self.k_phi,
        )

    def fit(self, X=None, y=None):
        out = self.out_dir or tempfile.mkdtemp(prefix="tihdp-")
        result = train(self._setup(), int(self.random_state), out)
        self.nets_ = result["nets"]
        self.checkpoint_ = str(result["checkpoint"])
        self.history_ = result["records"]
        self.n_features_in_ = LOW_OBS_DIM
        return self

    @classmethod
    def from_checkpoint(cls, path) -> "TIHDP":
        nets, manifest, _ = load_checkpoint(path)
        setup = manifest.get("meta", {}).get("setup", {})
        sc = setup.get("scenario", {})
        obs = ObsConfig.from_tag(nets.layout.obs_tag)
        est = cls(
            variant=nets.layout.variant,
            n_robots=sc.get("n_robots", nets.layout.n_robots),
            n_light=sc.get("n_light", 2), n_medium=sc.get("n_medium", 1), n_heavy=sc.get("n_heavy", 1),
            J=obs.J, K=obs.K, hidden=tuple(nets.layout.hidden),
            k_phi=setup.get("k_phi", 0.1),
            episode_length=sc.get("episode_length", 400),
        )
        est.nets_ = nets
        est.checkpoint_ = str(path)
        est.history_ = []
        est.n_features_in_ = LOW_OBS_DIM
        return est

    def predict(self, X) -> np.ndarray:
        """Greedy (move, turn) in {-1, 0, 1} for each control-observation row."""
        check_is_fitted(self, "nets_")
        X = check_array(X, dtype=np.float32)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        with torch.no_grad():
            logits = self.nets_.lo_actor(torch.from_numpy(X))
        return ActionDistribution("pair", logits).mode().numpy() - 1

    def score(self, X=None, y=None) -> float:
        """Completed-object ratio over ``eval_episodes`` greedy episodes."""
        from .harness.evaluate import evaluate_nets

        check_is_fitted(self, "nets_")
        report = evaluate_nets(self.nets_, self._scenario(), self.eval_episodes, 10_000, self.k_phi)
        if not report.applicable:
            raise ValueError(report.reason)
        return report.cor
