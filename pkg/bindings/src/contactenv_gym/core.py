from __future__ import annotations

import numpy as np

from contactenv import Environment, Termination, load_env_config
from contactenv.observations import LAYOUT

ACTION_DIM = 12

# Module-level registry so tests can assert handles are not leaked.
_OPEN_HANDLES: set[int] = set()


class ClosedHandleError(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


class EnvHandle:
    """One native environment behind a gym-style interface. Construction is
    lazy: the simulator spins up on the first reset."""

    def __init__(self, config_path: str, seed: int):
        self.config_path = str(config_path)
        self.seed = int(seed)
        self._env: Environment | None = None
        self._closed = False
        _OPEN_HANDLES.add(id(self))

    # -- lifecycle -------------------------------------------------------

    def _require_open(self) -> None:
        if self._closed:
            raise ClosedHandleError("operation on a closed environment handle")

    def _native(self) -> Environment:
        self._require_open()
        if self._env is None:
            config = load_env_config(self.config_path)
            self._env = Environment(config, seed=self.seed)
        return self._env

    def reset(self) -> np.ndarray:
        return self._native().reset()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool, dict]:
        env = self._native()
        if env.plan is None:
            raise RuntimeError("call reset() before step()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (ACTION_DIM,):
            raise ShapeError(f"action must have shape ({ACTION_DIM},), got {action.shape}")
        obs, breakdown, termination, info = env.step(action)
        truncated = bool(info.get("truncated", False))
        terminated = termination is not Termination.RUNNING
        info = dict(info)
        info["termination"] = termination.value
        info["reward_breakdown"] = breakdown.as_dict()
        return obs, float(breakdown.total), terminated, truncated, info

    def critic_obs(self) -> np.ndarray:
        env = self._native()
        if env.plan is None:
            raise RuntimeError("call reset() before critic_obs()")
        return env.critic_obs()

    def layout(self) -> dict:
        return LAYOUT.to_dict()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._env = None
            _OPEN_HANDLES.discard(id(self))

    def __enter__(self) -> "EnvHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class VectorEnvHandle:
    """N independent handles stepped in lockstep; observations stack into
    (N, 77) arrays and done environments report their terminal step until
    reset_done() revives them."""

    def __init__(self, config_path: str, seeds):
        self.handles = [EnvHandle(config_path, int(s)) for s in seeds]
        self._closed = False

    def __len__(self) -> int:
        return len(self.handles)

    def reset(self) -> np.ndarray:
        self._require_open()
        return np.stack([h.reset() for h in self.handles])

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list]:
        self._require_open()
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (len(self.handles), ACTION_DIM):
            raise ShapeError(
                f"actions must have shape ({len(self.handles)}, {ACTION_DIM}), got {actions.shape}"
            )
        obs, rewards, terms, truncs, infos = [], [], [], [], []
        for h, a in zip(self.handles, actions):
            o, r, te, tr, inf = h.step(a)
            obs.append(o)
            rewards.append(r)
            terms.append(te)
            truncs.append(tr)
            infos.append(inf)
        return (
            np.stack(obs),
            np.asarray(rewards),
            np.asarray(terms),
            np.asarray(truncs),
            infos,
        )

    def reset_done(self) -> None:
        for h in self.handles:
            if h._native().done:
                h.reset()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            for h in self.handles:
                h.close()

    def _require_open(self) -> None:
        if self._closed:
            raise ClosedHandleError("operation on a closed vector handle")


# -- functional front (mirrors the handle methods) ---------------------------


def make_env(config_path: str, seed: int = 0) -> EnvHandle:
    return EnvHandle(config_path, seed)


def make_vector_env(config_path: str, seeds) -> VectorEnvHandle:
    return VectorEnvHandle(config_path, seeds)


def reset(handle: EnvHandle) -> np.ndarray:
    return handle.reset()


def step(handle: EnvHandle, action) -> tuple[np.ndarray, float, bool, bool, dict]:
    return handle.step(action)


def critic_obs(handle: EnvHandle) -> np.ndarray:
    return handle.critic_obs()


def layout(handle: EnvHandle) -> dict:
    return handle.layout()


def close(handle: EnvHandle) -> None:
    handle.close()


def open_handle_count() -> int:
    return len(_OPEN_HANDLES)
