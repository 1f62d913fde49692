"""Compiled physics inner loop.

All substeps of one control step run inside a single numba kernel over plain
float64 arrays: joint-space PD, leg kinematics and Jacobians, spring-damper
normal contact with an anchored Coulomb-clamped tangential spring, and
semi-implicit Euler integration (symplectic, so the stiff contact springs
stay neutrally stable at the working time step).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def _quat_to_matrix(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    out[0, 0] = 1.0 - 2.0 * (yy + zz)
    out[0, 1] = 2.0 * (xy - wz)
    out[0, 2] = 2.0 * (xz + wy)
    out[1, 0] = 2.0 * (xy + wz)
    out[1, 1] = 1.0 - 2.0 * (xx + zz)
    out[1, 2] = 2.0 * (yz - wx)
    out[2, 0] = 2.0 * (xz - wy)
    out[2, 1] = 2.0 * (yz + wx)
    out[2, 2] = 1.0 - 2.0 * (xx + yy)


@njit(cache=True, fastmath=False)
def _height_at(heights, ox, oy, res, nx, ny, x, y):
    ix = int(math.floor((x - ox) / res))
    iy = int(math.floor((y - oy) / res))
    if ix < 0:
        ix = 0
    elif ix >= nx:
        ix = nx - 1
    if iy < 0:
        iy = 0
    elif iy >= ny:
        iy = ny - 1
    return heights[ix, iy]


@njit(cache=True, fastmath=False)
def run_substeps(
    n_sub,
    dt,
    mass,
    inertia,
    hip,
    side,
    d_ab,
    lu,
    ll,
    q_low,
    q_high,
    vel_lim,
    tau_lim,
    kp,
    kd,
    joint_inertia,
    gravity,
    k_ground,
    c_ground,
    mu,
    k_tan,
    c_tan,
    heights,
    ox,
    oy,
    res,
    pos,
    quat,
    vel,
    omega,
    q,
    qd,
    anchor,
    anchor_on,
    q_des,
    ext,
    tau_out,
    normal_out,
    foot_out,
    footv_out,
):
    nx, ny = heights.shape
    rot = np.empty((3, 3))
    foot_b = np.empty((4, 3))
    J = np.empty((4, 3, 3))
    force_w = np.empty((4, 3))

    for _ in range(n_sub):
        # Joint-space PD with torque limits.
        for j in range(12):
            t = kp * (q_des[j] - q[j]) - kd * qd[j]
            if t > tau_lim:
                t = tau_lim
            elif t < -tau_lim:
                t = -tau_lim
            tau_out[j] = t

        _quat_to_matrix(quat, rot)

        # Leg kinematics, Jacobians, foot world pos/vel, and contact forces.
        fx = fy = fz = 0.0  # world-frame contact force sum
        tbx = tby = tbz = 0.0  # body-frame torque about the base origin
        for leg in range(4):
            q1 = q[3 * leg]
            q2 = q[3 * leg + 1]
            q3 = q[3 * leg + 2]
            s1, c1 = math.sin(q1), math.cos(q1)
            s2, c2 = math.sin(q2), math.cos(q2)
            s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
            ab = side[leg] * d_ab

            dx = lu * s2 + ll * s23
            dz = -(lu * c2 + ll * c23)
            bx = hip[leg, 0] + dx
            by = hip[leg, 1] + c1 * ab - s1 * dz
            bz = hip[leg, 2] + s1 * ab + c1 * dz
            foot_b[leg, 0] = bx
            foot_b[leg, 1] = by
            foot_b[leg, 2] = bz

            J[leg, 0, 0] = 0.0
            J[leg, 1, 0] = -c1 * dz - s1 * ab
            J[leg, 2, 0] = -s1 * dz + c1 * ab
            px = lu * c2 + ll * c23
            pz = lu * s2 + ll * s23
            J[leg, 0, 1] = px
            J[leg, 1, 1] = -s1 * pz
            J[leg, 2, 1] = c1 * pz
            qx = ll * c23
            qz = ll * s23
            J[leg, 0, 2] = qx
            J[leg, 1, 2] = -s1 * qz
            J[leg, 2, 2] = c1 * qz

            # World position.
            wx = pos[0] + rot[0, 0] * bx + rot[0, 1] * by + rot[0, 2] * bz
            wy = pos[1] + rot[1, 0] * bx + rot[1, 1] * by + rot[1, 2] * bz
            wz = pos[2] + rot[2, 0] * bx + rot[2, 1] * by + rot[2, 2] * bz
            foot_out[leg, 0] = wx
            foot_out[leg, 1] = wy
            foot_out[leg, 2] = wz

            # Local velocity: omega x r + J qdot, then to world.
            lvx = omega[1] * bz - omega[2] * by
            lvy = omega[2] * bx - omega[0] * bz
            lvz = omega[0] * by - omega[1] * bx
            for k in range(3):
                dq = qd[3 * leg + k]
                lvx += J[leg, 0, k] * dq
                lvy += J[leg, 1, k] * dq
                lvz += J[leg, 2, k] * dq
            vwx = vel[0] + rot[0, 0] * lvx + rot[0, 1] * lvy + rot[0, 2] * lvz
            vwy = vel[1] + rot[1, 0] * lvx + rot[1, 1] * lvy + rot[1, 2] * lvz
            vwz = vel[2] + rot[2, 0] * lvx + rot[2, 1] * lvy + rot[2, 2] * lvz
            footv_out[leg, 0] = vwx
            footv_out[leg, 1] = vwy
            footv_out[leg, 2] = vwz

            ground = _height_at(heights, ox, oy, res, nx, ny, wx, wy)
            pen = ground - wz
            if pen > 0.0:
                n = k_ground * pen - c_ground * vwz
                if n < 0.0:
                    n = 0.0
                if not anchor_on[leg]:
                    anchor[leg, 0] = wx
                    anchor[leg, 1] = wy
                    anchor_on[leg] = True
                ftx = -k_tan * (wx - anchor[leg, 0]) - c_tan * vwx
                fty = -k_tan * (wy - anchor[leg, 1]) - c_tan * vwy
                ft = math.sqrt(ftx * ftx + fty * fty)
                limit = mu * n
                if ft > limit and ft > 1e-12:
                    scale = limit / ft
                    ftx *= scale
                    fty *= scale
                    # Re-seat the anchor behind the slipping foot so the bare
                    # spring reproduces the clipped force; folding the damping
                    # term in here can park anchors ahead of the foot and turn
                    # them into slingshots when the velocity collapses.
                    anchor[leg, 0] = wx + ftx / k_tan
                    anchor[leg, 1] = wy + fty / k_tan
                force_w[leg, 0] = ftx
                force_w[leg, 1] = fty
                force_w[leg, 2] = n
                normal_out[leg] = n
            else:
                anchor_on[leg] = False
                force_w[leg, 0] = 0.0
                force_w[leg, 1] = 0.0
                force_w[leg, 2] = 0.0
                normal_out[leg] = 0.0

            fx += force_w[leg, 0]
            fy += force_w[leg, 1]
            fz += force_w[leg, 2]

        # Base linear: semi-implicit Euler.
        ax = (fx + ext[0]) / mass
        ay = (fy + ext[1]) / mass
        az = (fz + ext[2]) / mass - gravity
        vel[0] += dt * ax
        vel[1] += dt * ay
        vel[2] += dt * az
        pos[0] += dt * vel[0]
        pos[1] += dt * vel[1]
        pos[2] += dt * vel[2]

        # Base angular: torque in body frame from body-frame foot forces.
        for leg in range(4):
            fbx = (
                rot[0, 0] * force_w[leg, 0]
                + rot[1, 0] * force_w[leg, 1]
                + rot[2, 0] * force_w[leg, 2]
            )
            fby = (
                rot[0, 1] * force_w[leg, 0]
                + rot[1, 1] * force_w[leg, 1]
                + rot[2, 1] * force_w[leg, 2]
            )
            fbz = (
                rot[0, 2] * force_w[leg, 0]
                + rot[1, 2] * force_w[leg, 1]
                + rot[2, 2] * force_w[leg, 2]
            )
            bx = foot_b[leg, 0]
            by = foot_b[leg, 1]
            bz = foot_b[leg, 2]
            tbx += by * fbz - bz * fby
            tby += bz * fbx - bx * fbz
            tbz += bx * fby - by * fbx

        # Joints are PD-driven kinematics: contact forces act on the base
        # wrench only. Reflecting them back through J^T as joint loads gives
        # the block-diagonal approximation a negative-stiffness bypass (the
        # joints comply faster than the anchors can restrain the base) and
        # stance slowly walks away under any horizontal load.
        for j in range(12):
            nqd = qd[j] + dt * tau_out[j] / joint_inertia
            if nqd > vel_lim:
                nqd = vel_lim
            elif nqd < -vel_lim:
                nqd = -vel_lim
            qd[j] = nqd

        # Legs with no contact force still need their PD update.
        # (handled above: tau_c = 0 when force_w is zero)

        tbx -= omega[1] * inertia[2] * omega[2] - omega[2] * inertia[1] * omega[1]
        tby -= omega[2] * inertia[0] * omega[0] - omega[0] * inertia[2] * omega[2]
        tbz -= omega[0] * inertia[1] * omega[1] - omega[1] * inertia[0] * omega[0]
        omega[0] += dt * tbx / inertia[0]
        omega[1] += dt * tby / inertia[1]
        omega[2] += dt * tbz / inertia[2]

        # Orientation increment from the body rate.
        wn = math.sqrt(omega[0] ** 2 + omega[1] ** 2 + omega[2] ** 2)
        angle = wn * dt
        if angle < 1e-12:
            dw, dxq, dyq, dzq = 1.0, 0.5 * dt * omega[0], 0.5 * dt * omega[1], 0.5 * dt * omega[2]
        else:
            half = 0.5 * angle
            s = math.sin(half) / wn
            dw = math.cos(half)
            dxq = s * omega[0]
            dyq = s * omega[1]
            dzq = s * omega[2]
        qw, qx_, qy_, qz_ = quat[0], quat[1], quat[2], quat[3]
        quat[0] = qw * dw - qx_ * dxq - qy_ * dyq - qz_ * dzq
        quat[1] = qw * dxq + qx_ * dw + qy_ * dzq - qz_ * dyq
        quat[2] = qw * dyq - qx_ * dzq + qy_ * dw + qz_ * dxq
        quat[3] = qw * dzq + qx_ * dyq - qy_ * dxq + qz_ * dw
        qn = math.sqrt(quat[0] ** 2 + quat[1] ** 2 + quat[2] ** 2 + quat[3] ** 2)
        for k in range(4):
            quat[k] /= qn

        # Joint positions with hard limits; outward velocity is killed at a stop.
        for j in range(12):
            nq = q[j] + dt * qd[j]
            if nq < q_low[j]:
                nq = q_low[j]
                if qd[j] < 0.0:
                    qd[j] = 0.0
            elif nq > q_high[j]:
                nq = q_high[j]
                if qd[j] > 0.0:
                    qd[j] = 0.0
            q[j] = nq

    # Refresh foot positions/velocities from the final pose so the returned
    # state keeps feet exactly at the forward kinematics of (pose, joints).
    _quat_to_matrix(quat, rot)
    for leg in range(4):
        q1 = q[3 * leg]
        q2 = q[3 * leg + 1]
        q3 = q[3 * leg + 2]
        s1, c1 = math.sin(q1), math.cos(q1)
        s2, c2 = math.sin(q2), math.cos(q2)
        s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
        ab = side[leg] * d_ab
        dx = lu * s2 + ll * s23
        dz = -(lu * c2 + ll * c23)
        bx = hip[leg, 0] + dx
        by = hip[leg, 1] + c1 * ab - s1 * dz
        bz = hip[leg, 2] + s1 * ab + c1 * dz
        foot_out[leg, 0] = pos[0] + rot[0, 0] * bx + rot[0, 1] * by + rot[0, 2] * bz
        foot_out[leg, 1] = pos[1] + rot[1, 0] * bx + rot[1, 1] * by + rot[1, 2] * bz
        foot_out[leg, 2] = pos[2] + rot[2, 0] * bx + rot[2, 1] * by + rot[2, 2] * bz

        J00 = 0.0
        J10 = -c1 * dz - s1 * ab
        J20 = -s1 * dz + c1 * ab
        px = lu * c2 + ll * c23
        pz = lu * s2 + ll * s23
        J01, J11, J21 = px, -s1 * pz, c1 * pz
        qx, qz = ll * c23, ll * s23
        J02, J12, J22 = qx, -s1 * qz, c1 * qz
        d0 = qd[3 * leg]
        d1 = qd[3 * leg + 1]
        d2 = qd[3 * leg + 2]
        lvx = omega[1] * bz - omega[2] * by + J00 * d0 + J01 * d1 + J02 * d2
        lvy = omega[2] * bx - omega[0] * bz + J10 * d0 + J11 * d1 + J12 * d2
        lvz = omega[0] * by - omega[1] * bx + J20 * d0 + J21 * d1 + J22 * d2
        footv_out[leg, 0] = vel[0] + rot[0, 0] * lvx + rot[0, 1] * lvy + rot[0, 2] * lvz
        footv_out[leg, 1] = vel[1] + rot[1, 0] * lvx + rot[1, 1] * lvy + rot[1, 2] * lvz
        footv_out[leg, 2] = vel[2] + rot[2, 0] * lvx + rot[2, 1] * lvy + rot[2, 2] * lvz


@njit(cache=True, fastmath=False)
def collision_flags(
    heights,
    ox,
    oy,
    res,
    pos,
    quat,
    q,
    hip,
    side,
    d_ab,
    lu,
    ll,
    corners,
    shin_fracs,
    flags,
):
    """Flag base-box corners and per-leg knee/shin sample points that are
    below the local terrain height. flags layout: corners, then per shin
    fraction one block of 4 legs."""
    nx, ny = heights.shape
    rot = np.empty((3, 3))
    _quat_to_matrix(quat, rot)
    n_corners = corners.shape[0]
    for i in range(n_corners):
        wx = pos[0] + rot[0, 0] * corners[i, 0] + rot[0, 1] * corners[i, 1] + rot[0, 2] * corners[i, 2]
        wy = pos[1] + rot[1, 0] * corners[i, 0] + rot[1, 1] * corners[i, 1] + rot[1, 2] * corners[i, 2]
        wz = pos[2] + rot[2, 0] * corners[i, 0] + rot[2, 1] * corners[i, 1] + rot[2, 2] * corners[i, 2]
        flags[i] = wz < _height_at(heights, ox, oy, res, nx, ny, wx, wy)
    for leg in range(4):
        q1 = q[3 * leg]
        q2 = q[3 * leg + 1]
        q3 = q[3 * leg + 2]
        s1, c1 = math.sin(q1), math.cos(q1)
        s2, c2 = math.sin(q2), math.cos(q2)
        s23, c23 = math.sin(q2 + q3), math.cos(q2 + q3)
        ab = side[leg] * d_ab
        # Knee point.
        kx = lu * s2
        kz = -lu * c2
        knee_x = hip[leg, 0] + kx
        knee_y = hip[leg, 1] + c1 * ab - s1 * kz
        knee_z = hip[leg, 2] + s1 * ab + c1 * kz
        # Foot point (for shin interpolation).
        dx = lu * s2 + ll * s23
        dz = -(lu * c2 + ll * c23)
        foot_x = hip[leg, 0] + dx
        foot_y = hip[leg, 1] + c1 * ab - s1 * dz
        foot_z = hip[leg, 2] + s1 * ab + c1 * dz
        for fi in range(shin_fracs.shape[0]):
            f = shin_fracs[fi]
            bx = knee_x + f * (foot_x - knee_x)
            by = knee_y + f * (foot_y - knee_y)
            bz = knee_z + f * (foot_z - knee_z)
            wx = pos[0] + rot[0, 0] * bx + rot[0, 1] * by + rot[0, 2] * bz
            wy = pos[1] + rot[1, 0] * bx + rot[1, 1] * by + rot[1, 2] * bz
            wz = pos[2] + rot[2, 0] * bx + rot[2, 1] * by + rot[2, 2] * bz
            flags[n_corners + fi * 4 + leg] = wz < _height_at(
                heights, ox, oy, res, nx, ny, wx, wy
            )
