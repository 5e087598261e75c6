# cython: language_level=3
"""Native float32 kernels for the flow solver.

Each entry point mirrors its _purekernels twin element for element (same
float32 operation order), so the two backends stay interchangeable; only
reduction order in the early-stop error may differ in the last bits.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrtf

cnp.import_array()


def warp_bilinear(cnp.ndarray[cnp.float32_t, ndim=2] img,
                  cnp.ndarray[cnp.float32_t, ndim=2] u,
                  cnp.ndarray[cnp.float32_t, ndim=2] v):
    """Sample img at (x + u, y + v) with bilinear weights, clamping to borders."""
    cdef int h = img.shape[0]
    cdef int w = img.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] out = np.empty((h, w), dtype=np.float32)
    cdef int x, y, x0, y0, x1, y1
    cdef float xx, yy
    cdef float wm1 = <float>(w - 1)
    cdef float hm1 = <float>(h - 1)
    cdef double fx, fy, top, bot
    for y in range(h):
        for x in range(w):
            xx = <float>x + u[y, x]
            yy = <float>y + v[y, x]
            if xx < 0.0:
                xx = 0.0
            elif xx > wm1:
                xx = wm1
            if yy < 0.0:
                yy = 0.0
            elif yy > hm1:
                yy = hm1
            x0 = <int>xx
            y0 = <int>yy
            x1 = x0 + 1
            if x1 > w - 1:
                x1 = w - 1
            y1 = y0 + 1
            if y1 > h - 1:
                y1 = h - 1
            # interpolation weights run in double, like the numpy twin
            fx = <double>xx - <double>x0
            fy = <double>yy - <double>y0
            top = <double>img[y0, x0] + fx * <double>(img[y0, x1] - img[y0, x0])
            bot = <double>img[y1, x0] + fx * <double>(img[y1, x1] - img[y1, x0])
            out[y, x] = <float>(top + fy * (bot - top))
    return out


def tvl1_iterations(cnp.ndarray[cnp.float32_t, ndim=2] I1wx,
                    cnp.ndarray[cnp.float32_t, ndim=2] I1wy,
                    cnp.ndarray[cnp.float32_t, ndim=2] rho_c,
                    cnp.ndarray[cnp.float32_t, ndim=2] grad,
                    cnp.ndarray[cnp.float32_t, ndim=2] u1,
                    cnp.ndarray[cnp.float32_t, ndim=2] u2,
                    cnp.ndarray[cnp.float32_t, ndim=2] p11,
                    cnp.ndarray[cnp.float32_t, ndim=2] p12,
                    cnp.ndarray[cnp.float32_t, ndim=2] p21,
                    cnp.ndarray[cnp.float32_t, ndim=2] p22,
                    double lam, double theta, double tau,
                    int n_iters, double stop_eps2):
    """Primal-dual fixed-point loop for one warp of the flow solver.

    May modify the flow and dual fields in place; callers must use the
    returned arrays.
    """
    cdef int h = u1.shape[0]
    cdef int w = u1.shape[1]
    cdef cnp.ndarray[cnp.float32_t, ndim=2] u1n = np.empty_like(u1)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] u2n = np.empty_like(u2)
    cdef cnp.ndarray[cnp.float32_t, ndim=2] swap
    cdef float lt = <float>(lam * theta)
    cdef float taut = <float>(tau / theta)
    cdef float theta32 = <float>theta
    cdef double n = <double>(h * w)
    cdef int it, x, y, done = 0
    cdef float rho, th, step, g, div1, div2, v1, v2, d1, d2
    cdef float ux, uy, ng
    cdef double err

    for it in range(n_iters):
        done += 1
        err = 0.0
        for y in range(h):
            for x in range(w):
                g = grad[y, x]
                rho = rho_c[y, x] + I1wx[y, x] * u1[y, x] + I1wy[y, x] * u2[y, x]
                th = lt * g
                if rho < -th:
                    step = lt
                elif rho > th:
                    step = -lt
                elif g > <float>1e-10:
                    step = -rho / g
                else:
                    step = 0.0
                v1 = u1[y, x] + step * I1wx[y, x]
                v2 = u2[y, x] + step * I1wy[y, x]
                div1 = p11[y, x]
                div2 = p21[y, x]
                if x > 0:
                    div1 -= p11[y, x - 1]
                    div2 -= p21[y, x - 1]
                if y > 0:
                    div1 += p12[y, x] - p12[y - 1, x]
                    div2 += p22[y, x] - p22[y - 1, x]
                else:
                    div1 += p12[y, x]
                    div2 += p22[y, x]
                u1n[y, x] = v1 + theta32 * div1
                u2n[y, x] = v2 + theta32 * div2
                d1 = u1n[y, x] - u1[y, x]
                d2 = u2n[y, x] - u2[y, x]
                err += <double>(d1 * d1) + <double>(d2 * d2)
        err /= n
        swap = u1; u1 = u1n; u1n = swap
        swap = u2; u2 = u2n; u2n = swap
        for y in range(h):
            for x in range(w):
                ux = u1[y, x + 1] - u1[y, x] if x < w - 1 else 0.0
                uy = u1[y + 1, x] - u1[y, x] if y < h - 1 else 0.0
                ng = 1.0 + taut * sqrtf(ux * ux + uy * uy)
                p11[y, x] = (p11[y, x] + taut * ux) / ng
                p12[y, x] = (p12[y, x] + taut * uy) / ng
                ux = u2[y, x + 1] - u2[y, x] if x < w - 1 else 0.0
                uy = u2[y + 1, x] - u2[y, x] if y < h - 1 else 0.0
                ng = 1.0 + taut * sqrtf(ux * ux + uy * uy)
                p21[y, x] = (p21[y, x] + taut * ux) / ng
                p22[y, x] = (p22[y, x] + taut * uy) / ng
        if err < stop_eps2:
            break
    return u1, u2, p11, p12, p21, p22, done
