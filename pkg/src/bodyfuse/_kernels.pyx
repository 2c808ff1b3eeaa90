# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled skinning-Jacobian and covariance-block kernels.

Mirrors ``_kernels_py``; loops run in a fixed order so results are
bit-stable from call to call.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def skin_jacobian(const double[:, ::1] shaped, const cnp.npy_intp[:, ::1] skin_idx,
                  const double[:, ::1] skin_w, const double[:, :, ::1] Rg,
                  const double[:, ::1] tg, const double[:, ::1] rest_joints,
                  const cnp.npy_intp[::1] parents, const double[:, :, ::1] shape_dirs,
                  const double[:, :, ::1] cterm, R_root, r_root):
    cdef Py_ssize_t N = shaped.shape[0]
    cdef Py_ssize_t S = skin_idx.shape[1]
    cdef Py_ssize_t K = parents.shape[0]
    cdef Py_ssize_t B = shape_dirs.shape[2]
    cdef Py_ssize_t D = B + 3 * (K - 1) + 6
    cdef double[:, ::1] Rr = np.ascontiguousarray(R_root, dtype=np.float64)
    cdef double[::1] rr = np.ascontiguousarray(r_root, dtype=np.float64)

    verts_np = np.empty((N, 3))
    J_np = np.zeros((N, 3, D))
    cdef double[:, ::1] verts = verts_np
    cdef double[:, :, ::1] J = J_np

    # R_root @ Rg[parent(i)] per joint
    RRp_np = np.zeros((K, 3, 3))
    cdef double[:, :, ::1] RRp = RRp_np
    cdef Py_ssize_t i, k, a, b, c, n, s, col
    for i in range(1, K):
        for a in range(3):
            for b in range(3):
                RRp[i, a, b] = (Rr[a, 0] * Rg[parents[i], 0, b] + Rr[a, 1] * Rg[parents[i], 1, b]
                                + Rr[a, 2] * Rg[parents[i], 2, b])

    acc_np = np.zeros((K, 3))
    wacc_np = np.zeros(K)
    jb_np = np.zeros((3, B))
    cdef double[:, ::1] acc = acc_np
    cdef double[::1] wacc = wacc_np
    cdef double[:, ::1] jb = jb_np
    cdef double Mv[3][3]
    cdef double vh[3]
    cdef double x[3]
    cdef double d[3]
    cdef double l[3]
    cdef double w, p0, p1, p2

    for n in range(N):
        for i in range(K):
            acc[i, 0] = 0.0
            acc[i, 1] = 0.0
            acc[i, 2] = 0.0
            wacc[i] = 0.0
        for a in range(3):
            vh[a] = 0.0
            for b in range(3):
                Mv[a][b] = 0.0
            for c in range(B):
                jb[a, c] = 0.0
        for s in range(S):
            k = skin_idx[n, s]
            w = skin_w[n, s]
            if w == 0.0:
                continue
            p0 = shaped[n, 0] - rest_joints[k, 0]
            p1 = shaped[n, 1] - rest_joints[k, 1]
            p2 = shaped[n, 2] - rest_joints[k, 2]
            for a in range(3):
                x[a] = Rg[k, a, 0] * p0 + Rg[k, a, 1] * p1 + Rg[k, a, 2] * p2 + tg[k, a]
                vh[a] += w * x[a]
                for b in range(3):
                    Mv[a][b] += w * Rg[k, a, b]
                for c in range(B):
                    jb[a, c] += w * cterm[k, a, c]
            i = k
            while i > 0:
                acc[i, 0] += w * x[0]
                acc[i, 1] += w * x[1]
                acc[i, 2] += w * x[2]
                wacc[i] += w
                i = parents[i]

        # shape columns
        for c in range(B):
            for a in range(3):
                d[a] = (jb[a, c] + Mv[a][0] * shape_dirs[n, 0, c] + Mv[a][1] * shape_dirs[n, 1, c]
                        + Mv[a][2] * shape_dirs[n, 2, c])
            for a in range(3):
                J[n, a, c] = Rr[a, 0] * d[0] + Rr[a, 1] * d[1] + Rr[a, 2] * d[2]

        # posture columns: -2 skew(R_root lever) (R_root Rg[parent])
        for i in range(1, K):
            if wacc[i] == 0.0:
                continue
            for a in range(3):
                d[a] = acc[i, a] - wacc[i] * tg[i, a]
            for a in range(3):
                l[a] = Rr[a, 0] * d[0] + Rr[a, 1] * d[1] + Rr[a, 2] * d[2]
            col = B + 3 * (i - 1)
            for b in range(3):
                J[n, 0, col + b] = -2.0 * (-l[2] * RRp[i, 1, b] + l[1] * RRp[i, 2, b])
                J[n, 1, col + b] = -2.0 * (l[2] * RRp[i, 0, b] - l[0] * RRp[i, 2, b])
                J[n, 2, col + b] = -2.0 * (-l[1] * RRp[i, 0, b] + l[0] * RRp[i, 1, b])

        # root columns
        for a in range(3):
            l[a] = Rr[a, 0] * vh[0] + Rr[a, 1] * vh[1] + Rr[a, 2] * vh[2]
            verts[n, a] = l[a] + rr[a]
            J[n, a, D - 6 + a] = 1.0
        col = D - 3
        J[n, 0, col + 1] = 2.0 * l[2]
        J[n, 0, col + 2] = -2.0 * l[1]
        J[n, 1, col + 0] = -2.0 * l[2]
        J[n, 1, col + 2] = 2.0 * l[0]
        J[n, 2, col + 0] = 2.0 * l[1]
        J[n, 2, col + 1] = -2.0 * l[0]
    return verts_np, J_np


def cov_blocks(const double[:, :, ::1] J, const double[::1] var):
    cdef Py_ssize_t M = J.shape[0]
    cdef Py_ssize_t D = J.shape[2]
    out_np = np.empty((M, 3, 3))
    cdef double[:, :, ::1] out = out_np
    cdef Py_ssize_t m, a, b, d
    cdef double acc
    for m in range(M):
        for a in range(3):
            for b in range(a + 1):
                acc = 0.0
                for d in range(D):
                    acc += J[m, a, d] * var[d] * J[m, b, d]
                out[m, a, b] = acc
                out[m, b, a] = acc
    return out_np
