"""Immiscible CO2/brine IMPES simulator on a 2-D Cartesian grid.

Each pressure step solves a backward-Euler total-volume balance for pressure
with two-point fluxes, then advances both phase inventories (lbmol) with an
explicit upwind scheme under a CFL limit. Pressure is finally re-evaluated
cell by cell so that the stored phase volumes exactly fill the pore space,
which keeps both phase inventories conservative to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from ..econ import STB_FT3
from ..errors import ContractError, IntegrityError, SolverError
from .model import (
    ControlVector,
    ObservationVector,
    ReservoirModel,
    StateField,
    sg_from_z,
    z_from_sg,
)
from .wells import peaceman_index

DARCY_FIELD = 1.127e-3  # bbl cp / (day psi mD ft)
DARCY_FT3 = DARCY_FIELD * STB_FT3
MOBILITY_FLOOR = 1e-6  # 1/cp, for injector flowing pressure
SAT_TOL = 1e-9
PRODUCER_DEADBAND = 1e-11  # relative


def harmonic(a, b):
    return 2.0 * a * b / (a + b)


@dataclass
class StepStats:
    pressure_steps: int = 0
    substeps: int = 0
    max_cfl: float = 0.0
    picard_iterations: int = 0


class Simulator:
    """Full-order environment. One instance owns no mutable simulation state;
    ``step`` is a pure function of its arguments."""

    def __init__(
        self,
        model: ReservoirModel,
        max_pressure_dt: float = 10.0,
        cfl: float = 0.5,
        solver_rtol: float = 1e-10,
        max_picard: int = 6,
        max_substeps: int = 200_000,
    ):
        self.model = model
        self.max_pressure_dt = float(max_pressure_dt)
        self.cfl = float(cfl)
        self.solver_rtol = solver_rtol
        self.max_picard = max_picard
        self.max_substeps = max_substeps

        g = model.grid
        self.n = g.n_cells
        self.shape = g.shape
        perm = model.rock.perm.ravel()
        idx = np.arange(self.n).reshape(g.shape)
        xl, xr = idx[:, :-1].ravel(), idx[:, 1:].ravel()
        yl, yr = idx[:-1, :].ravel(), idx[1:, :].ravel()
        self.face_l = np.r_[xl, yl]
        self.face_r = np.r_[xr, yr]
        self.face_t = np.r_[
            DARCY_FT3 * harmonic(perm[xl], perm[xr]) * g.dy * g.dz / g.dx,
            DARCY_FT3 * harmonic(perm[yl], perm[yr]) * g.dx * g.dz / g.dy,
        ]
        self.bulk_volume = g.cell_volume

        prods, injs = model.producers, model.injectors
        self.n_prod, self.n_inj = len(prods), len(injs)
        self.prod_cells = np.array([g.flat_index(*w.cell) for w in prods], dtype=int)
        self.inj_cells = np.array([g.flat_index(*w.cell) for w in injs], dtype=int)
        self.prod_J = np.array(
            [DARCY_FT3 * peaceman_index(perm[c], g, w) for c, w in zip(self.prod_cells, prods)]
        )
        self.inj_J = np.array(
            [DARCY_FT3 * peaceman_index(perm[c], g, w) for c, w in zip(self.inj_cells, injs)]
        )

        n_f = self.face_l.size
        self._rows = np.r_[self.face_l, self.face_r, np.arange(self.n)]
        self._cols = np.r_[self.face_r, self.face_l, np.arange(self.n)]
        self._n_faces = n_f
        self._init_fractional_flow()
        self.last_stats = StepStats()

    # ------------------------------------------------------------------ PVT
    def porosity(self, p):
        rock = self.model.rock
        return rock.porosity_ref * (1.0 + rock.rock_compressibility * (p - self.model.fluids.p_ref))

    def total_compressibility(self, p, sg):
        f = self.model.fluids
        rock = self.model.rock
        c_phi = rock.rock_compressibility * rock.porosity_ref / self.porosity(p)
        c_w = f.c_w * f.b_w / f.molar_density_w(p)
        c_g = f.c_g * f.b_g / f.molar_density_g(p)
        return c_phi + (1.0 - sg) * c_w + sg * c_g

    def _densities(self, p):
        f = self.model.fluids
        bw, bg = f.molar_density_w(p), f.molar_density_g(p)
        if np.any(bw <= 0) or np.any(bg <= 0) or np.any(self.porosity(p) <= 0):
            raise IntegrityError("pressure outside the range where linear PVT stays positive")
        return bw, bg

    def inventories(self, p, sg):
        """Phase inventories (water, gas) per cell in lbmol."""
        bw, bg = self._densities(p)
        pv = self.bulk_volume * self.porosity(p)
        return pv * bw * (1.0 - sg), pv * bg * sg

    def fluid_in_place(self, state: StateField) -> tuple[float, float]:
        """Total (water, CO2) in lbmol."""
        sg = sg_from_z(state.z_co2.ravel(), self.model.fluids)
        mw, mg = self.inventories(state.pressure.ravel(), sg)
        return math.fsum(mw), math.fsum(mg)

    def _pressure_from_inventories(self, mw, mg, p0):
        """Newton solve of V*phi(p) = mw/bw(p) + mg/bg(p) per cell."""
        f = self.model.fluids
        rock = self.model.rock
        V = self.bulk_volume
        p = p0.copy()
        for _ in range(60):
            bw, bg = self._densities(p)
            pore = V * self.porosity(p)
            res = pore - mw / bw - mg / bg
            dres = (
                V * rock.porosity_ref * rock.rock_compressibility
                + mw * f.b_w * f.c_w / bw**2
                + mg * f.b_g * f.c_g / bg**2
            )
            dp = res / dres
            p -= dp
            if np.max(np.abs(dp) / p) < 1e-13:
                break
        else:
            worst = np.max(np.abs(res) / pore)
            if worst > 1e-12:
                raise SolverError(f"pressure recovery from inventories stalled (volume residual {worst:.2e})")
        return p

    # ------------------------------------------------------- fractional flow
    def _init_fractional_flow(self):
        s = np.linspace(0.0, 1.0, 20001)
        d = self.frac_flow_derivative(s)
        k = int(np.argmax(d))
        self._fprime_global = float(d.max()) * 1.001
        tol = 1e-12 * d.max()
        self._unimodal = bool(np.all(np.diff(d[: k + 1]) >= -tol) and np.all(np.diff(d[k:]) <= tol))
        self._s_peak = float(s[k])

    def frac_flow(self, sg):
        lw, lg = self.model.fluids.mobilities(sg)
        return lg / (lw + lg)

    def frac_flow_derivative(self, sg):
        f = self.model.fluids
        sg = np.asarray(sg, dtype=float)
        span = 1.0 - f.S_wc - f.S_gr
        swe = np.clip((1.0 - sg - f.S_wc) / span, 0.0, 1.0)
        sge = np.clip((sg - f.S_gr) / span, 0.0, 1.0)
        lw = f.krw_max * swe**f.n_w / f.mu_w
        lg = f.krg_max * sge**f.n_g / f.mu_g
        in_w = (swe > 0) & (swe < 1)
        in_g = (sge > 0) & (sge < 1)
        dlw = np.where(in_w, -f.krw_max * f.n_w * swe ** (f.n_w - 1) / (span * f.mu_w), 0.0)
        dlg = np.where(in_g, f.krg_max * f.n_g * sge ** (f.n_g - 1) / (span * f.mu_g), 0.0)
        return (dlg * lw - lg * dlw) / (lw + lg) ** 2

    def _fprime_max(self, lo, hi):
        if not self._unimodal:
            return np.full_like(lo, self._fprime_global)
        return self.frac_flow_derivative(np.clip(self._s_peak, lo, hi)) * 1.001

    # --------------------------------------------------------------- pressure
    def _assemble(self, acc, p_lin, excess, lam_f, lam_t, bhp, active):
        """Linearized volume balance around ``p_lin``.

        ``excess`` is the volume-rate mismatch (ft3/day) of the current
        contents plus injection, evaluated at ``p_lin``.
        """
        tl = self.face_t * lam_f
        diag = acc.copy()
        diag += np.bincount(self.face_l, tl, self.n) + np.bincount(self.face_r, tl, self.n)
        rhs = acc * p_lin + excess
        jp = self.prod_J * lam_t[self.prod_cells] * active
        np.add.at(diag, self.prod_cells, jp)
        np.add.at(rhs, self.prod_cells, jp * bhp)
        data = np.r_[-tl, -tl, diag]
        A = sparse.csr_matrix((data, (self._rows, self._cols)), shape=(self.n, self.n))
        return A, rhs

    def _solve(self, A, rhs):
        p = spsolve(A.tocsc(), rhs)
        res = np.linalg.norm(A @ p - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if not np.all(np.isfinite(p)) or res > self.solver_rtol:
            raise SolverError(f"pressure solve relative residual {res:.3e} exceeds {self.solver_rtol:g}")
        return p

    def _producing(self, p, bhp):
        """Producers flow only when the cell pressure exceeds BHP; the small
        dead band keeps round-off from opening a well at equilibrium."""
        return p[self.prod_cells] - bhp > PRODUCER_DEADBAND * bhp

    def _check_controls(self, u: ControlVector):
        if u.producer_bhp.size != self.n_prod or u.injector_rate.size != self.n_inj:
            raise ContractError(
                f"control vector has {u.producer_bhp.size}+{u.injector_rate.size} channels, "
                f"model has {self.n_prod} producers and {self.n_inj} injectors"
            )
        if np.any(u.injector_rate < 0) or np.any(u.producer_bhp <= 0):
            raise ContractError("injection rates must be >= 0 and BHPs > 0")
        f = self.model.fluids
        inj = np.zeros(self.n)
        np.add.at(inj, self.inj_cells, u.injector_rate * f.B_g * f.b_g)
        return inj

    def _linearization(self, p_lin, mw, mg, inj, dt):
        f = self.model.fluids
        rock = self.model.rock
        bw, bg = self._densities(p_lin)
        pore = self.bulk_volume * self.porosity(p_lin)
        dpore = self.bulk_volume * rock.porosity_ref * rock.rock_compressibility
        gas = mg + dt * inj
        acc = (dpore + mw * f.b_w * f.c_w / bw**2 + gas * f.b_g * f.c_g / bg**2) / dt
        excess = (mw / bw + gas / bg - pore) / dt
        return acc, excess

    def pressure_system(self, state: StateField, u: ControlVector, dt: float):
        """Linear pressure system (A, rhs) of the first iterate."""
        p = state.pressure.ravel().copy()
        sg = sg_from_z(state.z_co2.ravel(), self.model.fluids)
        mw, mg = self.inventories(p, sg)
        lw, lg = self.model.fluids.mobilities(sg)
        lam_t = lw + lg
        inj = self._check_controls(u)
        acc, excess = self._linearization(p, mw, mg, inj, dt)
        up = np.where(p[self.face_l] >= p[self.face_r], self.face_l, self.face_r)
        active = self._producing(p, u.producer_bhp).astype(float)
        return self._assemble(acc, p, excess, lam_t[up], lam_t, u.producer_bhp, active)

    def _pressure_step(self, p, sg, mw, mg, inj, u: ControlVector, dt: float, stats: StepStats):
        """Newton iteration on the cell volume balance with mobilities frozen
        at the start of the step and upwind directions from the last iterate."""
        lw, lg = self.model.fluids.mobilities(sg)
        lam_t = lw + lg
        bhp = u.producer_bhp
        p_it = p
        for _ in range(self.max_picard):
            stats.picard_iterations += 1
            up = np.where(p_it[self.face_l] >= p_it[self.face_r], self.face_l, self.face_r)
            active = self._producing(p_it, bhp)
            acc, excess = self._linearization(p_it, mw, mg, inj, dt)
            A, rhs = self._assemble(acc, p_it, excess, lam_t[up], lam_t, bhp, active.astype(float))
            p_next = self._solve(A, rhs)
            change = np.max(np.abs(p_next - p_it) / np.abs(p_next))
            p_it = p_next
            if change < 1e-10:
                break
        if np.any(p_it <= 0):
            raise SolverError("pressure solve produced non-positive pressure")
        up = np.where(p_it[self.face_l] >= p_it[self.face_r], self.face_l, self.face_r)
        active = self._producing(p_it, bhp)
        return p_it, lam_t[up], lam_t, active

    # -------------------------------------------------------------- transport
    def _transport(self, p_new, lam_f, lam_t, active, u, inj, mw, mg, dt, stats):
        f = self.model.fluids
        l, r = self.face_l, self.face_r
        flux = self.face_t * lam_f * (p_new[l] - p_new[r])  # ft3/day, left -> right
        up = np.where(flux >= 0, l, r)
        dn = l + r - up
        fabs = np.abs(flux)
        pc, ic = self.prod_cells, self.inj_cells
        q_prod = np.where(active, self.prod_J * lam_t[pc] * (p_new[pc] - u.producer_bhp), 0.0)
        q_prod = np.maximum(q_prod, 0.0)
        bw, bg = self._densities(p_new)
        pv = self.bulk_volume * self.porosity(p_new)
        outflow = np.bincount(up, fabs, self.n)
        np.add.at(outflow, pc, q_prod)
        rate_scale = outflow / pv

        cum_w = np.zeros(self.n_prod)
        cum_g = np.zeros(self.n_prod)
        t = 0.0
        n_sub = 0
        while t < dt:
            vw, vg = mw / bw, mg / bg
            s = vg / (vw + vg)
            fg = self.frac_flow(s)
            fw = 1.0 - fg
            lo, hi = s.copy(), s.copy()
            s_up = s[up]
            np.minimum.at(lo, dn, s_up)
            np.maximum.at(hi, dn, s_up)
            hi[ic] = 1.0
            slope = np.maximum(self._fprime_max(lo, hi), fg / np.maximum(s, 1e-12))
            slope = np.maximum(slope, fw / np.maximum(1.0 - s, 1e-12))
            speed = float(np.max(rate_scale * slope))
            dts = dt - t
            if speed > 0 and dts * speed > self.cfl:
                dts = self.cfl / speed
            stats.max_cfl = max(stats.max_cfl, dts * speed)

            g_face = fabs * fg[up] * bg[up]
            w_face = fabs * fw[up] * bw[up]
            dmg = np.bincount(dn, g_face, self.n) - np.bincount(up, g_face, self.n)
            dmw = np.bincount(dn, w_face, self.n) - np.bincount(up, w_face, self.n)
            prod_g = q_prod * fg[pc] * bg[pc]
            prod_w = q_prod * fw[pc] * bw[pc]
            np.subtract.at(dmg, pc, prod_g)
            np.subtract.at(dmw, pc, prod_w)
            dmg += inj
            mg = mg + dts * dmg
            mw = mw + dts * dmw
            cum_g += dts * prod_g
            cum_w += dts * prod_w
            t = dt if dts >= dt - t else t + dts
            n_sub += 1
            if n_sub > self.max_substeps:
                raise IntegrityError(f"transport needed more than {self.max_substeps} sub-steps")
            tot = mw + mg
            if np.any(mg < -SAT_TOL * tot) or np.any(mw < -SAT_TOL * tot):
                raise IntegrityError("negative phase inventory during transport sub-step")
        stats.substeps += n_sub
        return mw, mg, cum_w, cum_g

    # ------------------------------------------------------------------ step
    def step(self, state: StateField, u: ControlVector, dt: float) -> tuple[StateField, ObservationVector]:
        """Hold control ``u`` for ``dt`` days."""
        if dt <= 0:
            raise ContractError(f"dt must be positive, got {dt}")
        if state.pressure.shape != self.shape:
            raise ContractError(f"state shape {state.pressure.shape} does not match grid {self.shape}")
        f = self.model.fluids
        stats = StepStats()
        p = state.pressure.ravel().copy()
        sg = sg_from_z(state.z_co2.ravel(), f)
        mw, mg = self.inventories(p, sg)
        n_p = max(1, math.ceil(dt / self.max_pressure_dt - 1e-12))
        dtp = dt / n_p
        prod_w = np.zeros(self.n_prod)
        prod_g = np.zeros(self.n_prod)
        inj = self._check_controls(u)
        for _ in range(n_p):
            p_new, lam_f, lam_t, active = self._pressure_step(p, sg, mw, mg, inj, u, dtp, stats)
            mw, mg, cw, cg = self._transport(p_new, lam_f, lam_t, active, u, inj, mw, mg, dtp, stats)
            prod_w += cw
            prod_g += cg
            mw = np.maximum(mw, 0.0)
            mg = np.maximum(mg, 0.0)
            p = self._pressure_from_inventories(mw, mg, p_new)
            bw, bg = self._densities(p)
            sg = (mg / bg) / (self.bulk_volume * self.porosity(p))
            if np.any(sg < -SAT_TOL) or np.any(sg > 1.0 + SAT_TOL):
                raise IntegrityError(f"saturation left [0, 1]: [{sg.min():.3e}, {sg.max():.3e}]")
            sg = np.clip(sg, 0.0, 1.0)
            stats.pressure_steps += 1
        self.last_stats = stats

        q_w = prod_w / (dt * STB_FT3 * f.b_w)
        q_g = prod_g / (dt * f.B_g * f.b_g)
        lw, lg = f.mobilities(sg[self.inj_cells])
        lam = np.maximum(lw + lg, MOBILITY_FLOOR)
        p_inj = p[self.inj_cells]
        q_res = inj[self.inj_cells] / f.molar_density_g(p_inj)
        p_wf = p_inj + q_res / (self.inj_J * lam)
        new_state = StateField(p.reshape(self.shape), z_from_sg(sg, f).reshape(self.shape))
        obs = ObservationVector(q_w, q_g, p_wf)
        if np.any(obs.q_w < 0) or np.any(obs.q_g < 0):
            raise IntegrityError("negative producer rate")
        return new_state, obs

    def run_episode(
        self,
        schedule: Sequence[ControlVector],
        control_period: float = 100.0,
        initial: StateField | None = None,
    ) -> list[tuple[StateField, ObservationVector]]:
        """Apply each control for one period; returns post-control (state, obs)."""
        state = self.model.initial_state() if initial is None else initial
        out = []
        for t, u in enumerate(schedule):
            try:
                state, obs = self.step(state, u, control_period)
            except (SolverError, IntegrityError) as exc:
                raise type(exc)(f"period {t}: {exc}") from exc
            out.append((state, obs))
        return out

    # ---------------------------------------------------------- diagnostics
    def steady_single_phase(self, fixed: dict[tuple[int, int], float], mobility: float = 1.0):
        """Incompressible single-phase steady pressure with fixed-pressure cells.

        Returns (pressure field, face fluxes in ft3/day left->right).
        """
        g = self.model.grid
        tl = self.face_t * mobility
        diag = np.bincount(self.face_l, tl, self.n) + np.bincount(self.face_r, tl, self.n)
        A = sparse.csr_matrix(
            (np.r_[-tl, -tl, diag], (self._rows, self._cols)), shape=(self.n, self.n)
        ).tolil()
        rhs = np.zeros(self.n)
        for (i, j), val in fixed.items():
            k = g.flat_index(i, j)
            A.rows[k] = [k]
            A.data[k] = [1.0]
            rhs[k] = val
        A = A.tocsr()
        p = spsolve(A.tocsc(), rhs)
        flux = tl * (p[self.face_l] - p[self.face_r])
        return p.reshape(self.shape), flux


def run_episode(
    sim: Simulator,
    schedule: Sequence[ControlVector],
    control_period: float = 100.0,
    initial: StateField | None = None,
):
    return sim.run_episode(schedule, control_period, initial)
