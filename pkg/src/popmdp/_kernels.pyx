# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path-recursion kernels.

Must stay operation-for-operation in sync with `_kernels_py` (same
multiply/add grouping, same atom lookup) so the two backends produce
bit-identical samples; compiled with -ffp-contract=off for that reason.
"""

import numpy as np

RULE_AFFINE = 0
RULE_CONSTANT = 1


def sample_indices(const double[::1] cumprobs, const double[::1] uniforms):
    cdef Py_ssize_t n = uniforms.shape[0], m = cumprobs.shape[0]
    cdef Py_ssize_t p, j
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] out_v = out
    for p in range(n):
        j = 0
        while j < m - 1 and uniforms[p] >= cumprobs[j]:
            j += 1
        out_v[p] = j
    return out


def mv_paths(const double[::1] x0, const double[::1] growths,
             const long long[::1] kinds, const double[::1] kappas,
             const double[:, ::1] directions, list atoms, list cumprobs,
             const double[:, ::1] uniforms, double[:, ::1] out):
    cdef Py_ssize_t n_paths = x0.shape[0]
    cdef Py_ssize_t n_stages = growths.shape[0]
    cdef Py_ssize_t d = directions.shape[1]
    cdef Py_ssize_t n, p, k, j, m
    cdef double x, coef, pay, u, growth, kappa
    cdef long long kind
    cdef const double[:, ::1] atom_view
    cdef const double[::1] cw
    for p in range(n_paths):
        out[0, p] = x0[p]
    for n in range(n_stages):
        atom_view = atoms[n]
        cw = cumprobs[n]
        m = cw.shape[0]
        growth = growths[n]
        kappa = kappas[n]
        kind = kinds[n]
        for p in range(n_paths):
            x = out[n, p]
            u = uniforms[n, p]
            j = 0
            while j < m - 1 and u >= cw[j]:
                j += 1
            if kind == RULE_AFFINE:
                coef = kappa - x
            else:
                coef = 1.0
            pay = 0.0
            for k in range(d):
                pay += (coef * directions[n, k]) * atom_view[j, k]
            out[n + 1, p] = growth * (x + pay)
    return np.asarray(out)


def lq_paths(const double[::1] x0, double b, double d, double sigma,
             const double[::1] slopes, const double[::1] intercepts, list atoms,
             list cumprobs, const double[:, ::1] uniforms, double[:, ::1] states,
             double[:, ::1] actions):
    cdef Py_ssize_t n_paths = x0.shape[0]
    cdef Py_ssize_t n_stages = slopes.shape[0]
    cdef Py_ssize_t n, p, j, m
    cdef double x, a, u, slope, intercept
    cdef const double[::1] atom_view
    cdef const double[::1] cw
    for p in range(n_paths):
        states[0, p] = x0[p]
    for n in range(n_stages):
        atom_view = atoms[n]
        cw = cumprobs[n]
        m = cw.shape[0]
        slope = slopes[n]
        intercept = intercepts[n]
        for p in range(n_paths):
            x = states[n, p]
            u = uniforms[n, p]
            j = 0
            while j < m - 1 and u >= cw[j]:
                j += 1
            a = slope * x + intercept
            actions[n, p] = a
            states[n + 1, p] = (b * x + d * a) + sigma * atom_view[j]
    return np.asarray(states), np.asarray(actions)
