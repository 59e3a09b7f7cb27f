"""Independent high-precision reference values frozen into the unit tests.

Run with: python3 tests/oracles/reference_values.py
"""
import mpmath as mp

mp.mp.dps = 30


def i21_homogeneous_isotropic(sigma0, s, rho0, eps, t):
    # Inner integral over the first depth done in closed form (a logarithm),
    # outer integral by tanh-sinh on both sides of the kink.
    sigma0, s, rho0, eps, t = map(mp.mpf, (sigma0, s, rho0, eps, t))
    p = s / (4 * mp.pi)

    def z1_min(z2):
        reach = eps * z2 - rho0
        return max(mp.mpf(0), t / 2 - reach**2 / (2 * (t - 2 * z2)))

    def outer(z2):
        lo = z1_min(z2)
        return mp.log((t - lo - z2) / (t / 2 - z2)) / z2**2

    lo, hi = rho0 / eps, t / 2
    kink = mp.findroot(lambda z2: (eps * z2 - rho0) ** 2 - t * (t - 2 * z2), (lo, hi),
                       solver="anderson")
    val = mp.quad(outer, [lo, kink, hi])
    return 2 * mp.pi**2 * rho0**2 * mp.exp(-sigma0 * t) * p * p * val


def three_leg_attenuation(sig, z1, z2, t):
    # Optical depth summed leg by leg along the actual straight segments.
    z1, z2, t = map(mp.mpf, (z1, z2, t))
    # Split at the profile nodes so each piece is smooth.
    def cuts(lo, hi):
        a, b = min(lo, hi), max(lo, hi)
        return [a] + [z for z in sig.nodes if a < z < b] + [b]

    middle = t - z1 - z2
    down = mp.quad(sig, cuts(0, z1))
    if z1 == z2:
        across = sig(z1) * middle
    else:
        u_cuts = sorted((z - z1) / (z2 - z1) for z in cuts(z1, z2))
        across = mp.quad(lambda u: sig(z1 + (z2 - z1) * u), u_cuts) * middle
    up = mp.quad(sig, cuts(0, z2))
    return mp.exp(-(down + across + up))


def profile(zs, vs):
    zs = [mp.mpf(z) for z in zs]
    vs = [mp.mpf(v) for v in vs]

    def f(z):
        if z <= zs[0]:
            return vs[0]
        if z >= zs[-1]:
            return vs[-1]
        for k in range(len(zs) - 1):
            if zs[k] <= z <= zs[k + 1]:
                w = (z - zs[k]) / (zs[k + 1] - zs[k])
                return vs[k] + w * (vs[k + 1] - vs[k])
    return f


def i21_tabulated_isotropic(st, b, rho0, eps, t):
    # Nested QUADPACK qags over D0 with the three-leg attenuation; double
    # precision, good to about 1e-9 relative.
    from scipy.integrate import quad

    def z1_min(z2):
        reach = eps * z2 - rho0
        return max(0.0, t / 2 - reach**2 / (2 * (t - 2 * z2)))

    def inner(z2):
        lo = z1_min(z2)

        def f(z1):
            e = float(three_leg_attenuation_fast(st, z1, z2, t))
            return e * float(b(z1)) * float(b(z2)) / (16 * float(mp.pi)**2) / (z2**2 * (t - z1 - z2))
        pts = [float(z) for z in st.nodes if lo < z < t / 2]
        return quad(f, lo, t / 2, epsabs=0, epsrel=1e-12, limit=200, points=pts or None)[0]

    lo, hi = rho0 / eps, t / 2
    kink = float(mp.findroot(lambda z2: (eps * z2 - rho0) ** 2 - t * (t - 2 * z2), (lo, hi),
                             solver="anderson"))
    pts = sorted({kink, *[float(z) for z in st.nodes if lo < z < hi]})
    return 2 * float(mp.pi)**2 * rho0**2 * quad(inner, lo, hi, epsabs=0, epsrel=1e-11,
                                                 limit=400, points=pts)[0]


def three_leg_attenuation_fast(sig, z1, z2, t):
    # Leg optical depths of a piecewise-linear profile in closed form (float);
    # three_leg_attenuation above checks this path against mp.quad.
    zs = [float(z) for z in sig.nodes]
    vs = [float(sig(z)) for z in sig.nodes]

    def tau(z):
        acc, prev_z, prev_v = 0.0, 0.0, vs[0]
        for zk, vk in zip(zs, vs):
            if zk <= prev_z:
                continue
            top = min(z, zk)
            v_top = prev_v + (vk - prev_v) * (top - prev_z) / (zk - prev_z)
            acc += 0.5 * (prev_v + v_top) * (top - prev_z)
            if z <= zk:
                return acc
            prev_z, prev_v = zk, vk
        return acc + vs[-1] * (z - prev_z)

    middle = t - z1 - z2
    if z1 == z2:
        across = float(sig(z1)) * middle
    else:
        across = (tau(z2) - tau(z1)) / (z2 - z1) * middle
    return mp.exp(-(tau(z1) + across + tau(z2)))


if __name__ == "__main__":
    for t in (50, 100, 150):
        v = i21_homogeneous_isotropic(0.01, 0.008, 0.1, 0.1, t)
        print(f"homogeneous I21 t={t}: {mp.nstr(v, 20)}")
    for t in (3, 10):
        v = i21_homogeneous_isotropic(0.1, 0.05, 0.1, 0.1, t)
        print(f"homogeneous(0.1,0.05) I21 t={t}: {mp.nstr(v, 20)}")

    zs, vs = [0, 20, 60], [0.02, 0.06, 0.01]
    st = profile(zs, vs)
    st.nodes = [mp.mpf(z) for z in zs]
    b = profile(zs, [0.8 * v for v in vs])
    for (z1, z2, t) in ((10, 30, 90), (40, 5, 100), (25, 25, 70)):
        print(f"three-leg E z1={z1} z2={z2} t={t}: "
              f"{mp.nstr(three_leg_attenuation(st, z1, z2, t), 20)}")
    mp.mp.dps = 15
    v = i21_tabulated_isotropic(st, b, 0.1, 0.1, 80.0)
    print(f"tabulated I21 t=80: {v:.15g}")
