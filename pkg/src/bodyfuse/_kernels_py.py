"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled path is checked against.
"""

import numpy as np


def _skew(v):
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def skin_jacobian(shaped, skin_idx, skin_w, Rg, tg, rest_joints, parents,
                  shape_dirs, cterm, R_root, r_root):
    """Skinned camera-frame vertices (N, 3) and their Jacobian (N, 3, D).

    ``cterm`` (K, 3, B) holds the beta derivative of each joint's skinning
    offset ``tg_k - Rg_k J_k``.
    """
    N = shaped.shape[0]
    K = parents.shape[0]
    B = shape_dirs.shape[2]
    D = B + 3 * (K - 1) + 6

    offs = tg - np.einsum("kij,kj->ki", Rg, rest_joints)
    x = np.einsum("nsij,nj->nsi", Rg[skin_idx], shaped) + offs[skin_idx]  # (N, S, 3)
    wx = skin_w[:, :, None] * x
    verts_h = wx.sum(axis=1)

    # desc[k, i] = 1 if joint k lies in the subtree rooted at i
    desc = np.zeros((K, K))
    for k in range(K):
        i = k
        while i >= 0:
            desc[k, i] = 1.0
            i = parents[i]
    D_s = desc[skin_idx]  # (N, S, K)
    S_acc = np.einsum("nsk,nsc->nkc", D_s, wx)
    W_acc = np.einsum("nsk,ns->nk", D_s, skin_w)
    lever = S_acc - W_acc[:, :, None] * tg[None]  # (N, K, 3)

    J = np.empty((N, 3, D))
    Mv = np.einsum("ns,nsij->nij", skin_w, Rg[skin_idx])
    jb = np.einsum("nij,njb->nib", Mv, shape_dirs) + np.einsum("ns,nsib->nib", skin_w, cterm[skin_idx])
    J[:, :, :B] = np.einsum("ij,njb->nib", R_root, jb)
    Rp = Rg[parents[1:]]  # (K-1, 3, 3)
    blk = -2.0 * np.einsum("nkij,kjl->nkil", _skew(lever[:, 1:]), Rp)
    blk = np.einsum("ij,nkjl->nkil", R_root, blk)  # (N, K-1, 3, 3)
    J[:, :, B:B + 3 * (K - 1)] = blk.transpose(0, 2, 1, 3).reshape(N, 3, 3 * (K - 1))
    verts_c = verts_h @ R_root.T + r_root
    J[:, :, D - 6:D - 3] = np.eye(3)
    J[:, :, D - 3:] = -2.0 * _skew(verts_c - r_root)
    return verts_c, J


def cov_blocks(J, var):
    """Per-point 3x3 blocks of ``J diag(var) J^T`` for J of shape (M, 3, D)."""
    C = np.matmul(J * var, J.transpose(0, 2, 1))
    return 0.5 * (C + C.transpose(0, 2, 1))
