"""Compiled inner loop for in-substrate training.

Mirrors the composition of ``hw_sample_pass``, ``anneal_run`` and
``charge_pump_update`` one sample at a time, consuming pre-drawn uniforms
and normals in exactly the order the reference path draws them.
"""
import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _bgf_segment(W, bv, bh, G, gv, gh, ngv, ngh, particles, next_particle,
                 rows, unif, normals, temps, alpha, w_min, w_max, headroom,
                 c1, c2, noise_rms):
    M, N = W.shape
    P = particles.shape[0]
    span = w_max - w_min
    use_noise = noise_rms > 0.0
    ui = 0
    ni = 0
    a_h = np.empty(N)
    a_v = np.empty(M)
    h = np.empty(N)
    v = np.empty(M)
    for r in range(rows.shape[0]):
        x = rows[r]
        # positive phase: one settle pass with the data clamped
        for j in range(N):
            s = 0.0
            for i in range(M):
                s += x[i] * (W[i, j] * G[i, j])
            a_h[j] = s + bh[j] * gh[j]
        if use_noise:
            ms = 0.0
            for j in range(N):
                ms += a_h[j] * a_h[j]
            sc = noise_rms * math.sqrt(ms / N)
            for j in range(N):
                a_h[j] += sc * normals[ni]
                ni += 1
        for j in range(N):
            z = c1 * ngh[j] * (a_h[j] - c2)
            p = 1.0 / (1.0 + math.exp(-z))
            h[j] = 1.0 if unif[ui] < p else 0.0
            ui += 1
        for i in range(M):
            if x[i] > 0.0:
                for j in range(N):
                    if h[j] > 0.0:
                        step = G[i, j] * alpha
                        if headroom:
                            step = step * (w_max - W[i, j]) / span
                        W[i, j] = min(max(W[i, j] + step, w_min), w_max)
                step = gv[i] * alpha
                if headroom:
                    step = step * (w_max - bv[i]) / span
                bv[i] = min(max(bv[i] + step, w_min), w_max)
        for j in range(N):
            if h[j] > 0.0:
                step = gh[j] * alpha
                if headroom:
                    step = step * (w_max - bh[j]) / span
                bh[j] = min(max(bh[j] + step, w_min), w_max)

        # negative phase: anneal the next particle
        k = next_particle
        next_particle = (next_particle + 1) % P
        for j in range(N):
            h[j] = particles[k, j]
        for t in range(temps.shape[0]):
            temp = temps[t]
            for i in range(M):
                s = 0.0
                for j in range(N):
                    s += h[j] * (W[i, j] * G[i, j])
                a_v[i] = s + bv[i] * gv[i]
            if use_noise:
                ms = 0.0
                for i in range(M):
                    ms += a_v[i] * a_v[i]
                sc = noise_rms * math.sqrt(ms / M)
                for i in range(M):
                    a_v[i] += sc * normals[ni]
                    ni += 1
            for i in range(M):
                g = ngv[i] / temp if temp != 1.0 else ngv[i]
                z = c1 * g * (a_v[i] - c2)
                p = 1.0 / (1.0 + math.exp(-z))
                v[i] = 1.0 if unif[ui] < p else 0.0
                ui += 1
            for j in range(N):
                s = 0.0
                for i in range(M):
                    s += v[i] * (W[i, j] * G[i, j])
                a_h[j] = s + bh[j] * gh[j]
            if use_noise:
                ms = 0.0
                for j in range(N):
                    ms += a_h[j] * a_h[j]
                sc = noise_rms * math.sqrt(ms / N)
                for j in range(N):
                    a_h[j] += sc * normals[ni]
                    ni += 1
            for j in range(N):
                g = ngh[j] / temp if temp != 1.0 else ngh[j]
                z = c1 * g * (a_h[j] - c2)
                p = 1.0 / (1.0 + math.exp(-z))
                h[j] = 1.0 if unif[ui] < p else 0.0
                ui += 1
        for j in range(N):
            particles[k, j] = h[j]
        for i in range(M):
            if v[i] > 0.0:
                for j in range(N):
                    if h[j] > 0.0:
                        step = G[i, j] * alpha
                        if headroom:
                            step = step * (W[i, j] - w_min) / span
                        W[i, j] = min(max(W[i, j] - step, w_min), w_max)
                step = gv[i] * alpha
                if headroom:
                    step = step * (bv[i] - w_min) / span
                bv[i] = min(max(bv[i] - step, w_min), w_max)
        for j in range(N):
            if h[j] > 0.0:
                step = gh[j] * alpha
                if headroom:
                    step = step * (bh[j] - w_min) / span
                bh[j] = min(max(bh[j] - step, w_min), w_max)
    return next_particle


if numba is not None:
    bgf_segment = numba.njit(cache=True)(_bgf_segment)
    HAVE_NUMBA = True
else:  # pragma: no cover
    bgf_segment = _bgf_segment
    HAVE_NUMBA = False
