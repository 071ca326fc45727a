"""Compiled inner loops for trajectory batches.

Every trajectory runs with its own ``numpy.random.Generator``, so results do
not depend on how trajectories are split between workers.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def pauli_product_index(a, b):
    """Index of the Pauli a*b up to phase."""
    x = ((a == 1) or (a == 2)) != ((b == 1) or (b == 2))
    z = ((a == 2) or (a == 3)) != ((b == 2) or (b == 3))
    if x and z:
        return 2
    if x:
        return 1
    if z:
        return 3
    return 0


@njit(cache=True, inline="always")
def sample_mixture(rng, p_plus, sd):
    """Readout drawn from the two-Gaussian mixture centred at +1 and -1."""
    if rng.random() < p_plus:
        c = 1.0
    else:
        c = -1.0
    return c + sd * rng.standard_normal()


@njit(cache=True, inline="always")
def gauge_measure(b, axis, r_eff, phi_eff, lam_scale, damp):
    """Bayesian update of a gauge Bloch vector ``b`` measured along ``axis``.

    ``axis`` is 0 for X and 2 for Z.  ``r_eff`` is the readout with the
    subspace sign folded in, ``lam_scale = dt/tau``, ``phi_eff`` the phase
    kick between the eigenstates and ``damp`` the residual dephasing factor.
    """
    th = np.tanh(r_eff * lam_scale)
    if axis == 2:
        a, p, q = b[2], b[0], b[1]
    else:
        a, p, q = b[0], b[1], b[2]
    inv = 1.0 / (1.0 + a * th)
    a2 = (th + a) * inv
    sc = np.sqrt(1.0 - th * th) * inv
    p = p * sc
    q = q * sc
    if phi_eff != 0.0:
        c = np.cos(phi_eff)
        s = np.sin(phi_eff)
        p2 = (p * c + q * s) * damp
        q2 = (q * c - p * s) * damp
    else:
        p2 = p * damp
        q2 = q * damp
    if axis == 2:
        b[2], b[0], b[1] = a2, p2, q2
    else:
        b[0], b[1], b[2] = a2, p2, q2


@njit(cache=True, inline="always")
def gauge_measure_all(rng, b, signs, readouts, dt, sd, ls, K, eps, damp, sample):
    """Sequential measurement of the four gauge detectors on the gauge qubit.

    ``sd = sqrt(tau/dt)`` and ``ls = dt/tau`` per channel.  If ``sample`` is
    true the readouts are drawn and written into ``readouts``.
    """
    for k in range(4):
        axis = 0 if k < 2 else 2
        s = signs[k]
        if sample:
            u = rng.random()
            g = rng.standard_normal()
            c = 1.0 if 2.0 * u < 1.0 + s * b[axis] else -1.0
            readouts[k] = c + sd[k] * g
        r = readouts[k]
        phi = 0.0
        if K[k] != 0.0 or eps[k] != 0.0:
            phi = s * (K[k] * r + eps[k]) * dt
        gauge_measure(b, axis, s * r, phi, ls[k], damp[k])


@njit(cache=True)
def apply_gauge_pauli(b, g):
    if g == 1:
        b[1] = -b[1]
        b[2] = -b[2]
    elif g == 2:
        b[0] = -b[0]
        b[2] = -b[2]
    elif g == 3:
        b[0] = -b[0]
        b[1] = -b[1]


# correlator state layout: filt[4] low-pass filtered signals, out[2] outer
# averages, ring[2, nwin] window samples, rsum[2] running sums.


@njit(cache=True)
def correlator_step(I, filt, out, ring, rsum, pos, a_in, inner, kernel, a_out, nwin, wlast, tdt, step):
    """Advance both gauge-pair correlators by one frame; returns new ring position."""
    for k in range(4):
        filt[k] = a_in * filt[k] + (1.0 - a_in) * I[k]
    for p in range(2):
        i = 2 * p
        j = i + 1
        if inner == 0:
            ct = 0.5 * (I[i] * filt[j] + filt[i] * I[j])
        else:
            ct = filt[i] * filt[j]
        if kernel == 0:
            out[p] = a_out * out[p] + (1.0 - a_out) * ct
        else:
            rsum[p] += ct - ring[p, pos]
            ring[p, pos] = ct
    if kernel == 1:
        pos = (pos + 1) % nwin
        if pos == 0:
            for p in range(2):
                acc = 0.0
                for m in range(nwin):
                    acc += ring[p, m]
                rsum[p] = acc
        for p in range(2):
            out[p] = (rsum[p] - (1.0 - wlast) * ring[p, pos]) / tdt
    return pos


@njit(cache=True)
def correlator_trace(signals, filt, out, ring, rsum, pos, a_in, inner, kernel, a_out, nwin, wlast, tdt):
    n = signals.shape[0]
    res = np.empty((n, 2))
    for t in range(n):
        pos = correlator_step(signals[t], filt, out, ring, rsum, pos, a_in, inner, kernel, a_out,
                              nwin, wlast, tdt, t)
        res[t, 0] = out[0]
        res[t, 1] = out[1]
    return res, pos


@njit(cache=True)
def _init_corr(ring, rsum, out, filt, c_init, nwin, wlast, tdt):
    for k in range(4):
        filt[k] = 0.0
    for p in range(2):
        out[p] = c_init
        for m in range(nwin):
            ring[p, m] = c_init
        rsum[p] = c_init * nwin


@njit(cache=True, inline="always")
def _pauli_jump(rng, rates, total, dt, fac):
    """Index of the Pauli error occurring in this frame, or -1."""
    u = rng.random()
    if u >= total * dt * fac:
        return -1
    target = u / (dt * fac)
    acc = 0.0
    for e in range(rates.shape[0]):
        acc += rates[e]
        if target < acc:
            return e
    return rates.shape[0] - 1


@njit(cache=True)
def run_gauge_trajectory(rng, n_steps, dt, tau, K, eps, damp, sub_sign, rates, jump_next, jump_gauge,
                         jump_logical, boost, bloch0, sub0, inner, kernel, a_in, a_out, nwin, wlast,
                         tdt, c_init, thr, arm_step, stop_on_alarm, inject_step, inject_idx, rec_steps,
                         rec_alive, rec_w, rec_sub, rec_frame):
    """One gauge-qubit trajectory with Pauli jumps and correlator monitoring.

    Jump rates are multiplied by ``boost`` while outside Q0; the likelihood
    ratio is carried in the trajectory weight.  Records are written into the
    ``rec_*`` rows at the frame counts listed in ``rec_steps``.
    Returns (alarm_step, alarm_pair, n_jumps, inject_seen).
    """
    n_rec = rec_steps.shape[0]
    total = 0.0
    for e in range(rates.shape[0]):
        total += rates[e]
    b = bloch0.copy()
    sd = np.sqrt(tau / dt)
    ls = dt / tau
    I = np.empty(4)
    signs = np.empty(4)
    filt = np.empty(4)
    out = np.empty(2)
    rsum = np.empty(2)
    ring = np.empty((2, nwin))
    _init_corr(ring, rsum, out, filt, c_init, nwin, wlast, tdt)
    sub = sub0
    frame = 0
    w = 1.0
    pos = 0
    ri = 0
    alive = True
    alarm_step = -1
    alarm_pair = -1
    n_jumps = 0
    inject_seen = -1
    for step in range(n_steps):
        for k in range(4):
            signs[k] = sub_sign[sub, k]
        gauge_measure_all(rng, b, signs, I, dt, sd, ls, K, eps, damp, True)
        if total > 0.0:
            fac = boost if sub != 0 else 1.0
            e_hit = _pauli_jump(rng, rates, total, dt, fac)
            if e_hit >= 0:
                w /= fac
                frame = pauli_product_index(jump_logical[e_hit, sub], frame)
                apply_gauge_pauli(b, jump_gauge[e_hit, sub])
                sub = jump_next[e_hit, sub]
                n_jumps += 1
            elif fac != 1.0:
                w *= (1.0 - total * dt) / (1.0 - total * dt * fac)
        if step == inject_step:
            frame = pauli_product_index(jump_logical[inject_idx, sub], frame)
            apply_gauge_pauli(b, jump_gauge[inject_idx, sub])
            sub = jump_next[inject_idx, sub]
            inject_seen = step
        pos = correlator_step(I, filt, out, ring, rsum, pos, a_in, inner, kernel, a_out,
                              nwin, wlast, tdt, step)
        if alive and step >= arm_step:
            for p in range(2):
                if out[p] < thr:
                    alarm_step = step
                    alarm_pair = p
                    alive = False
                    break
        while ri < n_rec and rec_steps[ri] == step + 1:
            rec_alive[ri] = alive
            rec_w[ri] = w
            rec_sub[ri] = sub
            rec_frame[ri] = frame
            ri += 1
        if not alive and stop_on_alarm:
            break
    while ri < n_rec:
        rec_alive[ri] = False
        rec_w[ri] = w
        rec_sub[ri] = sub
        rec_frame[ri] = frame
        ri += 1
    return alarm_step, alarm_pair, n_jumps, inject_seen


@njit(cache=True)
def gauge_trace(rng, n_steps, dt, tau, K, eps, damp, sub_sign, rates, jump_next, jump_gauge,
                jump_logical, bloch0, sub0, inject_step, inject_idx):
    """Single gauge-qubit trajectory returning signals, Bloch vectors and labels."""
    sig = np.empty((n_steps, 4))
    bl = np.empty((n_steps, 3))
    subs = np.empty(n_steps, dtype=np.int64)
    frames = np.empty(n_steps, dtype=np.int64)
    b = bloch0.copy()
    sd = np.sqrt(tau / dt)
    ls = dt / tau
    sub = sub0
    frame = 0
    total = 0.0
    for e in range(rates.shape[0]):
        total += rates[e]
    I = np.empty(4)
    signs = np.empty(4)
    for step in range(n_steps):
        for k in range(4):
            signs[k] = sub_sign[sub, k]
        gauge_measure_all(rng, b, signs, I, dt, sd, ls, K, eps, damp, True)
        if total > 0.0:
            e_hit = _pauli_jump(rng, rates, total, dt, 1.0)
            if e_hit >= 0:
                frame = pauli_product_index(jump_logical[e_hit, sub], frame)
                apply_gauge_pauli(b, jump_gauge[e_hit, sub])
                sub = jump_next[e_hit, sub]
        if step == inject_step:
            frame = pauli_product_index(jump_logical[inject_idx, sub], frame)
            apply_gauge_pauli(b, jump_gauge[inject_idx, sub])
            sub = jump_next[inject_idx, sub]
        sig[step] = I
        bl[step] = b
        subs[step] = sub
        frames[step] = frame
    return sig, bl, subs, frames


# ---------------------------------------------------------------- state vectors

@njit(cache=True)
def _parity(i):
    c = 0
    while i:
        c ^= i & 1
        i >>= 1
    return c


@njit(cache=True)
def _apply_gauge(k, v, out):
    # G1 = X1X2, G2 = X3X4, G3 = Z1Z3, G4 = Z2Z4 on computational amplitudes
    if k == 0:
        for i in range(16):
            out[i] = v[i ^ 12]
    elif k == 1:
        for i in range(16):
            out[i] = v[i ^ 3]
    elif k == 2:
        for i in range(16):
            out[i] = -v[i] if _parity(i & 10) else v[i]
    else:
        for i in range(16):
            out[i] = -v[i] if _parity(i & 5) else v[i]


@njit(cache=True)
def _apply_single(m, q, v, out):
    """Apply 2x2 matrix ``m`` on qubit ``q`` (0-based, qubit 0 most significant)."""
    sh = 3 - q
    bit = 1 << sh
    for i in range(16):
        if i & bit:
            continue
        j = i | bit
        a0 = v[i]
        a1 = v[j]
        out[i] = m[0, 0] * a0 + m[0, 1] * a1
        out[j] = m[1, 0] * a0 + m[1, 1] * a1


@njit(cache=True)
def _renorm(psi, cw, nv):
    acc = 0.0
    for a in range(nv):
        for i in range(16):
            acc += cw[a] * (psi[a, i].real ** 2 + psi[a, i].imag ** 2)
    s = 1.0 / np.sqrt(acc)
    for a in range(nv):
        for i in range(16):
            psi[a, i] *= s


@njit(cache=True)
def _decode_units(psi, nv, b0h, pp_mask, mm_mask, dest):
    """Logical 2x2 outputs for units (0,0), (1,1), (0,1) after gauge projection."""
    c = np.zeros((2, 2, 4), dtype=np.complex128)
    for a in range(nv):
        for pr in range(2):
            for j in range(4):
                acc = 0.0 + 0.0j
                for i in range(16):
                    msk = pp_mask[i] if pr == 0 else mm_mask[i]
                    if msk:
                        acc += b0h[j, i] * psi[a, i]
                c[a, pr, j] = acc
    units = ((0, 0), (1, 1), (0, 1))
    for u in range(3):
        a, bb = units[u]
        if a >= nv or bb >= nv:
            for l in range(2):
                for m in range(2):
                    dest[u, l, m] = 0.0
            continue
        for l in range(2):
            for m in range(2):
                acc = 0.0 + 0.0j
                for pr in range(2):
                    for g in range(2):
                        acc += c[a, pr, 2 * l + g] * np.conj(c[bb, pr, 2 * m + g])
                dest[u, l, m] = acc


@njit(cache=True)
def _unit_norms(psi, nv, dest):
    """Traces of the evolved units (0,0), (1,1), (0,1)."""
    units = ((0, 0), (1, 1), (0, 1))
    for u in range(3):
        a, bb = units[u]
        acc = 0.0 + 0.0j
        if a < nv and bb < nv:
            for i in range(16):
                acc += psi[a, i] * np.conj(psi[bb, i])
        dest[u] = acc


@njit(cache=True, inline="always")
def _measure_state(rng, psi, cw, nv, k, zsign, dt, tau_k, K_k, eps_k, nrm_in):
    """Sample a readout of gauge ``k`` from the mixture and apply its Kraus operator.

    ``psi`` enters with mixture norm ``nrm_in``; the rescaling is folded
    into the update and the new norm is returned with the readout, so the
    vectors are normalized only once per frame.  Z-type gauges are diagonal
    (signs ``zsign``); X-type gauges swap amplitude pairs.
    """
    ev = 0.0
    if k >= 2:
        for a in range(nv):
            for i in range(16):
                ev += cw[a] * zsign[i] * (psi[a, i].real ** 2 + psi[a, i].imag ** 2)
    else:
        m = 12 if k == 0 else 3
        for a in range(nv):
            for i in range(16):
                ev += cw[a] * (psi[a, i].real * psi[a, i ^ m].real + psi[a, i].imag * psi[a, i ^ m].imag)
    ev /= nrm_in
    r = sample_mixture(rng, 0.5 * (1.0 + ev), np.sqrt(tau_k / dt))
    lam = r * dt / tau_k
    # factors exp(+-lam/2) relative to the larger one, so nothing overflows
    sc = 1.0 / np.sqrt(nrm_in)
    if lam >= 0.0:
        cp = sc + 0.0j
        cm = sc * np.exp(-lam) + 0.0j
    else:
        cp = sc * np.exp(lam) + 0.0j
        cm = sc + 0.0j
    if K_k != 0.0 or eps_k != 0.0:
        phi = (K_k * r + eps_k) * dt
        cm = cm * (np.cos(phi) - 1j * np.sin(phi))
    nrm = 0.0
    if k >= 2:
        for a in range(nv):
            for i in range(16):
                v = psi[a, i] * (cp if zsign[i] > 0 else cm)
                psi[a, i] = v
                nrm += cw[a] * (v.real ** 2 + v.imag ** 2)
    else:
        hp = 0.5 * (cp + cm)
        hm = 0.5 * (cp - cm)
        m = 12 if k == 0 else 3
        for a in range(nv):
            for i in range(16):
                j = i ^ m
                if j < i:
                    continue
                x = psi[a, i]
                y = psi[a, j]
                u = hp * x + hm * y
                v = hm * x + hp * y
                psi[a, i] = u
                psi[a, j] = v
                nrm += cw[a] * (u.real ** 2 + u.imag ** 2 + v.real ** 2 + v.imag ** 2)
    return r, nrm


@njit(cache=True)
def run_statevector_trajectory(rng, psi0, cw, n_steps, dt, tau, K, eps, op_qubit, op_mat, op_diag, op_rate,
                               boost, b0h, pp_mask, mm_mask, inner, kernel, a_in, a_out, nwin,
                               wlast, tdt, c_init, thr, arm_step, stop_on_alarm, rec_steps, rec_alive,
                               rec_w, rec_out, rec_norm):
    """One pure-state trajectory of the full four-qubit register.

    ``psi0`` holds one or two initial vectors that share every random draw;
    readouts and jumps are sampled from the mixture weighted by ``cw`` and
    all vectors are divided by the common mixture norm, which makes the
    recorded outer products unbiased estimates of the evolved operators.
    ``op_diag[o]`` is the diagonal of ``L_o^dag L_o`` on the register (jump
    operators with non-diagonal ``L^dag L`` are not supported).
    Returns (alarm_step, alarm_pair, n_jumps).
    """
    nv = psi0.shape[0]
    n_rec = rec_steps.shape[0]
    n_ops = op_rate.shape[0]
    psi = psi0.copy()
    tmp = np.empty(16, dtype=np.complex128)
    pop = np.empty(16)
    I = np.empty(4)
    filt = np.empty(4)
    out = np.empty(2)
    rsum = np.empty(2)
    ring = np.empty((2, nwin))
    probs = np.empty(n_ops)
    z13 = np.empty(16)
    z24 = np.empty(16)
    zall = np.empty(16)
    nojump = np.ones(16)
    for i in range(16):
        z13[i] = -1.0 if _parity(i & 10) else 1.0
        z24[i] = -1.0 if _parity(i & 5) else 1.0
        zall[i] = -1.0 if _parity(i) else 1.0
        for o in range(n_ops):
            nojump[i] -= 0.5 * dt * op_rate[o] * op_diag[o, i]
    _renorm(psi, cw, nv)
    _init_corr(ring, rsum, out, filt, c_init, nwin, wlast, tdt)
    w = 1.0
    pos = 0
    ri = 0
    alive = True
    alarm_step = -1
    alarm_pair = -1
    n_jumps = 0
    for step in range(n_steps):
        I[0], nrm = _measure_state(rng, psi, cw, nv, 0, z13, dt, tau[0], K[0], eps[0], 1.0)
        I[1], nrm = _measure_state(rng, psi, cw, nv, 1, z13, dt, tau[1], K[1], eps[1], nrm)
        I[2], nrm = _measure_state(rng, psi, cw, nv, 2, z13, dt, tau[2], K[2], eps[2], nrm)
        I[3], nrm = _measure_state(rng, psi, cw, nv, 3, z24, dt, tau[3], K[3], eps[3], nrm)
        sc = 1.0 / np.sqrt(nrm)
        for a in range(nv):
            for i in range(16):
                psi[a, i] *= sc
        if n_ops > 0:
            for i in range(16):
                acc = 0.0
                for a in range(nv):
                    acc += cw[a] * (psi[a, i].real ** 2 + psi[a, i].imag ** 2)
                pop[i] = acc
            fac = 1.0
            if boost != 1.0:
                # code-space weight <(1 + X_all)(1 + Z_all)/4>
                q0 = 0.0
                for a in range(nv):
                    for i in range(16):
                        if zall[i] > 0:
                            x = psi[a, i]
                            y = psi[a, i ^ 15]
                            q0 += cw[a] * 0.5 * (x.real ** 2 + x.imag ** 2 + x.real * y.real + x.imag * y.imag)
                if q0 < 0.5:
                    fac = boost
            ptot = 0.0
            for o in range(n_ops):
                pr = 0.0
                for i in range(16):
                    pr += op_diag[o, i] * pop[i]
                pr *= op_rate[o] * dt
                probs[o] = pr
                ptot += pr
            u = rng.random()
            if u < ptot * fac:
                target = u / fac
                acc = 0.0
                hit = n_ops - 1
                for o in range(n_ops):
                    acc += probs[o]
                    if target < acc:
                        hit = o
                        break
                for a in range(nv):
                    _apply_single(op_mat[hit], op_qubit[hit], psi[a], tmp)
                    for i in range(16):
                        psi[a, i] = tmp[i]
                _renorm(psi, cw, nv)
                w /= fac
                n_jumps += 1
            else:
                if fac != 1.0:
                    w *= (1.0 - ptot) / (1.0 - ptot * fac)
                # no-jump evolution 1 - dt/2 sum_o rate L^dag L
                for a in range(nv):
                    for i in range(16):
                        psi[a, i] *= nojump[i]
                _renorm(psi, cw, nv)
        pos = correlator_step(I, filt, out, ring, rsum, pos, a_in, inner, kernel, a_out,
                              nwin, wlast, tdt, step)
        if alive and step >= arm_step:
            for p in range(2):
                if out[p] < thr:
                    alarm_step = step
                    alarm_pair = p
                    alive = False
                    break
        while ri < n_rec and rec_steps[ri] == step + 1:
            rec_alive[ri] = alive
            rec_w[ri] = w
            if alive:
                _decode_units(psi, nv, b0h, pp_mask, mm_mask, rec_out[ri])
                _unit_norms(psi, nv, rec_norm[ri])
            ri += 1
        if not alive and stop_on_alarm:
            break
    return alarm_step, alarm_pair, n_jumps
