"""Scalar, loop-only re-statements of the two cells (no numpy linear algebra)."""

import math


def _sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def _affine(W, b, z, k):
    return sum(W[k][j] * z[j] for j in range(len(z))) + b[k]


def lstm_transcript(P, xs):
    """P maps names to nested lists; returns per-step (h, C, output)."""
    H = len(P["b_f"])
    h, C, rows = [0.0] * H, [0.0] * H, []
    for x in xs:
        z = h + [x]
        f = [_sig(_affine(P["W_f"], P["b_f"], z, k)) for k in range(H)]
        i = [_sig(_affine(P["W_i"], P["b_i"], z, k)) for k in range(H)]
        c = [math.tanh(_affine(P["W_c"], P["b_c"], z, k)) for k in range(H)]
        o = [_sig(_affine(P["W_o"], P["b_o"], z, k)) for k in range(H)]
        C = [f[k] * C[k] + i[k] * c[k] for k in range(H)]
        h = [o[k] * math.tanh(C[k]) for k in range(H)]
        out = sum(P["W_out"][k] * h[k] for k in range(H)) + P["b_out"]
        rows.append((list(h), list(C), out))
    return rows


def gru_transcript(P, xs):
    H = len(P["b_r"])
    h, rows = [0.0] * H, []
    for x in xs:
        z = h + [x]
        r = [_sig(_affine(P["W_r"], P["b_r"], z, k)) for k in range(H)]
        u = [_sig(_affine(P["W_z"], P["b_z"], z, k)) for k in range(H)]
        zr = [r[k] * h[k] for k in range(H)] + [x]
        hh = [math.tanh(_affine(P["W_h"], P["b_h"], zr, k)) for k in range(H)]
        h = [(1 - u[k]) * h[k] + u[k] * hh[k] for k in range(H)]
        out = sum(P["W_out"][k] * h[k] for k in range(H)) + P["b_out"]
        rows.append((list(h), out))
    return rows
