"""Command-line pipeline: model -> data -> surrogate -> agent -> report.

Every command reads the run configuration, works inside the output
directory and refuses to run on upstream artifacts whose fingerprints do not
match. Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import datapipe, e2co, sacrl, simcore
from .config import RunConfig, dump_config, load_config
from .errors import ArtifactError, CcsrlError, ConfigurationError, FingerprintMismatch, NumericalError

log = logging.getLogger("ccsrl")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class Paths:
    """Artifact layout inside the output directory."""

    def __init__(self, out):
        self.root = Path(out)
        self.model = self.root / "model" / "model.yaml"
        self.perm_image = self.root / "model" / "log_perm.pgm"
        self.dataset = self.root / "data" / "dataset.e2cd"
        self.e2co = self.root / "e2co" / "e2co.nda"
        self.loss_csv = self.root / "e2co" / "loss.csv"
        self.errors_csv = self.root / "e2co" / "rollout_errors.csv"
        self.errors_yaml = self.root / "e2co" / "rollout_summary.yaml"
        self.fields = self.root / "e2co" / "fields"
        self.policy = self.root / "sac" / "policy.nda"
        self.curve_csv = self.root / "sac" / "learning_curve.csv"
        self.npv_csv = self.root / "policy" / "npv_table.csv"
        self.schedule_csv = self.root / "policy" / "schedule.csv"
        self.random_csv = self.root / "policy" / "random_schedules.csv"
        self.report = self.root / "report.txt"
        self.resolved = self.root / "resolved_config.yaml"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"{path} not found; run `ccsrl {producer}` first")
    return path


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _load_model(cfg: RunConfig, p: Paths) -> simcore.ReservoirModel:
    """The saved model must be the one the configuration describes."""
    model = simcore.load_model(_require(p.model, "gen-model"))
    expected = simcore.model_fingerprint(simcore.model_from_dict(cfg.model))
    found = simcore.model_fingerprint(model)
    if found != expected:
        raise FingerprintMismatch("model file vs configuration", expected, found)
    return model


def _load_dataset(cfg: RunConfig, model, p: Paths) -> datapipe.Dataset:
    ds = datapipe.read_dataset(_require(p.dataset, "gen-data"), expected_fingerprint=simcore.model_fingerprint(model))
    # the container was produced by a different data configuration
    want = (cfg.seed, cfg.data.n_traj, cfg.data.n_steps, float(cfg.data.control_period))
    have = (ds.meta.get("seed"), ds.n_traj, ds.n_steps, ds.meta.get("control_period"))
    if want != have:
        raise FingerprintMismatch("dataset (seed, n_traj, n_steps, control_period)", str(want), str(have))
    return ds


def _load_surrogate(p: Paths, ds: datapipe.Dataset):
    return e2co.load_e2co(_require(p.e2co, "train-e2co"), expected_dataset=ds.meta["sha256"])


# -------------------------------------------------------------- commands
def cmd_gen_model(cfg: RunConfig, p: Paths, args) -> None:
    model = simcore.model_from_dict(cfg.model)
    simcore.save_model(model, p.model)
    simcore.write_pgm(p.perm_image, np.log(model.rock.perm))
    log.info("model %s written, fingerprint %s", p.model, simcore.model_fingerprint(model))


def cmd_gen_data(cfg: RunConfig, p: Paths, args) -> None:
    model = _load_model(cfg, p)
    d = cfg.data
    ds = datapipe.generate_dataset(
        model, d.n_traj, d.n_steps, cfg.seed, d.control_period, workers=args.threads,
        progress=lambda k: log.info("trajectory %d/%d", k, d.n_traj) if k % 10 == 0 else None,
    )
    man = datapipe.write_dataset(p.dataset, ds)
    frac = ds.out_of_range_fraction()
    if frac:
        log.warning("%.3g%% of normalized entries fall outside [-0.01, 1.01]", 100 * frac)
    log.info("%d tuples written to %s (sha256 %s)", len(ds), p.dataset, man["sha256"])


def _split(cfg: RunConfig, ds):
    return datapipe.split(ds, tuple(cfg.data.split), seed=cfg.seed)


def cmd_train_e2co(cfg: RunConfig, p: Paths, args) -> None:
    model = _load_model(cfg, p)
    ds = _load_dataset(cfg, model, p)
    train, test = _split(cfg, ds)
    net = e2co.E2coModel(
        cfg.e2co_config(ds.x.shape[1], ds.u.shape[1], ds.y.shape[1]),
        rng=np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,))),
    )
    log.info("training E2CO with %d parameters on %d tuples", net.n_parameters(), len(train))
    net, hist = e2co.train(
        net, train, cfg.train_config(), val_ds=test if len(test) else None,
        callback=lambda r: log.info("epoch %d train %.5f val %.5f (%.1fs)", r.epoch, r.train, r.val, r.seconds),
    )
    e2co.save_e2co(p.e2co, net, ds.stats, dataset_digest=ds.meta["sha256"],
                   model_fingerprint=ds.meta["model_fingerprint"], grid_shape=list(ds.grid_shape),
                   n_prod=ds.n_prod, n_inj=ds.n_inj)
    _write_csv(p.loss_csv, ["epoch", "lr", "train", "val", "val_rec", "val_kl", "val_yobs"],
               [(h.epoch, h.lr, h.train, h.val, h.val_rec, h.val_kl, h.val_yobs) for h in hist])


def cmd_eval_e2co(cfg: RunConfig, p: Paths, args) -> None:
    model = _load_model(cfg, p)
    ds = _load_dataset(cfg, model, p)
    net, _, _ = _load_surrogate(p, ds)
    _, test = _split(cfg, ds)
    held = test if len(test) else ds
    err = e2co.rollout_errors(net, held)
    _write_csv(p.errors_csv, ["step", "pressure_rel", "z_abs", "obs_abs"],
               [(t + 1, err.pressure_rel[t], err.z_abs[t], err.obs_abs[t]) for t in range(len(err.pressure_rel))])
    summary = {
        "mean_pressure_rel": err.mean_pressure_rel,
        "mean_z_abs": err.mean_z_abs,
        "reconstruction": err.recon,
        "error_grows": err.monotone_growth(),
        "held_out_trajectories": int(held.n_traj),
    }
    p.errors_yaml.write_text(yaml.safe_dump(summary, sort_keys=False))
    # true vs predicted fields of the first held-out trajectory at the final step
    traj = held.trajectory(0)
    nz = held.normalizer()
    pred, _, _ = e2co.latent_rollout(net, traj["x0"], traj["u"])
    truth = nz.denorm(traj["x"][-1], "x")
    guess = nz.denorm(pred[-1], "x")
    nb, shape = held.n_cells, held.grid_shape
    p.fields.mkdir(parents=True, exist_ok=True)
    for name, sl, lo, hi in (("pressure", slice(0, nb), ds.stats.p_min, ds.stats.p_max), ("z_co2", slice(nb, None), 0.0, 1.0)):
        simcore.write_pgm(p.fields / f"{name}_true.pgm", truth[sl].reshape(shape), lo, hi)
        simcore.write_pgm(p.fields / f"{name}_pred.pgm", guess[sl].reshape(shape), lo, hi)
    log.info("held-out pressure relative error %.4f, z_co2 absolute error %.4f", err.mean_pressure_rel, err.mean_z_abs)


def _latent_env(cfg: RunConfig, model, net, stats) -> sacrl.LatentEnv:
    nz = datapipe.Normalizer(stats, model.grid.n_cells, len(model.producers), len(model.injectors))
    return sacrl.LatentEnv(net, nz, model.initial_state(), model.bounds, cfg.econ_params(),
                           cfg.sac.reward_scale, cfg.data.n_steps)


def cmd_train_sac(cfg: RunConfig, p: Paths, args) -> None:
    model = _load_model(cfg, p)
    ds = _load_dataset(cfg, model, p)
    net, stats, _ = _load_surrogate(p, ds)
    env = _latent_env(cfg, model, net, stats)
    agent, curve = sacrl.train_agent(
        env, cfg.sac_config(),
        callback=lambda c: log.info("episode %d NPV %.4g $", c.episode, c.npv) if c.episode % 25 == 0 else None,
    )
    sacrl.save_agent(p.policy, agent, surrogate_digest=datapipe.file_digest(p.e2co))
    _write_csv(p.curve_csv, ["episode", "return", "npv", "critic_loss", "actor_loss"],
               [(c.episode, c.ret, c.npv, c.critic_loss, c.actor_loss) for c in curve])


def cmd_eval_policy(cfg: RunConfig, p: Paths, args) -> None:
    model = _load_model(cfg, p)
    ds = _load_dataset(cfg, model, p)
    net, stats, _ = _load_surrogate(p, ds)
    agent, _ = sacrl.load_agent(_require(p.policy, "train-sac"), expected_surrogate=datapipe.file_digest(p.e2co))
    env = _latent_env(cfg, model, net, stats)
    params = cfg.econ_params()
    res = sacrl.evaluate_policy(agent, env, model)
    base = sacrl.base_case(model, params, cfg.data.n_steps)
    rand = sacrl.random_baseline(model, cfg.eval.random_schedules, cfg.seed, params, cfg.data.n_steps)
    _write_csv(p.npv_csv, ["case", "environment", "npv_usd"], [
        ("trained_policy", "surrogate", res["surrogate"].npv),
        ("trained_policy", "full_order", res["full_order"].npv),
        ("base_case_midpoint", "full_order", base.npv),
    ])
    names = [f"bhp_{w.id}" for w in model.producers] + [f"rate_{w.id}" for w in model.injectors]
    sched = res["surrogate"].schedule_array()
    _write_csv(p.schedule_csv, ["period", *names], [(t + 1, *row) for t, row in enumerate(sched)])
    _write_csv(p.random_csv, ["schedule", "npv_usd"], list(enumerate(rand)))
    log.info("NPV surrogate %.4g, full order %.4g, base case %.4g, random mean %.4g",
             res["surrogate"].npv, res["full_order"].npv, base.npv, rand.mean() if rand.size else float("nan"))


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg: RunConfig, p: Paths, args) -> None:
    lines = [f"profile: {cfg.profile}", f"seed: {cfg.seed}", ""]
    if p.model.exists():
        model = _load_model(cfg, p)
        lines += [f"model fingerprint: {simcore.model_fingerprint(model)}",
                  f"grid: {model.grid.nx} x {model.grid.ny}, wells: {len(model.producers)} producers, "
                  f"{len(model.injectors)} injectors", ""]
    man = datapipe.manifest_path(p.dataset)
    if man.exists():
        m = yaml.safe_load(man.read_text())
        lines += [f"dataset: {m['n_traj']} trajectories x {m['n_steps']} steps = {m['n_tuples']} tuples",
                  f"dataset sha256: {m['sha256']}", ""]
    if p.loss_csv.exists():
        rows = _read_csv(p.loss_csv)
        best = min(rows, key=lambda r: float(r["val"]))
        lines += [f"surrogate: {len(rows)} epochs, best validation loss {float(best['val']):.5f} at epoch {best['epoch']}", ""]
    if p.errors_yaml.exists():
        s = yaml.safe_load(p.errors_yaml.read_text())
        lines += [f"held-out rollout: pressure relative error {s['mean_pressure_rel']:.4%}, "
                  f"z_co2 absolute error {s['mean_z_abs']:.4f}, error grows over horizon: {s['error_grows']}", ""]
    if p.curve_csv.exists():
        rows = _read_csv(p.curve_csv)
        tail = [float(r["npv"]) for r in rows[-20:]]
        lines += [f"agent: {len(rows)} episodes, mean training-episode NPV over the last {len(tail)}: "
                  f"{np.mean(tail):,.0f} USD", ""]
    if p.npv_csv.exists():
        lines.append("NPV comparison (USD):")
        for r in _read_csv(p.npv_csv):
            lines.append(f"  {r['case']:<20} {r['environment']:<11} {float(r['npv_usd']):>16,.0f}")
        if p.random_csv.exists():
            rand = np.array([float(r["npv_usd"]) for r in _read_csv(p.random_csv)])
            if rand.size:
                lines.append(f"  {'random schedules':<20} {'full_order':<11} {rand.mean():>16,.0f}  "
                             f"(mean of {rand.size}, std {rand.std():,.0f})")
        rows = {(r["case"], r["environment"]): float(r["npv_usd"]) for r in _read_csv(p.npv_csv)}
        gap = rows[("trained_policy", "surrogate")] - rows[("trained_policy", "full_order")]
        lines.append(f"  surrogate minus full-order gap: {gap:,.0f}")
    p.report.write_text("\n".join(lines) + "\n")
    print(p.report.read_text(), end="")


COMMANDS = {
    "gen-model": cmd_gen_model,
    "gen-data": cmd_gen_data,
    "train-e2co": cmd_train_e2co,
    "eval-e2co": cmd_eval_e2co,
    "train-sac": cmd_train_sac,
    "eval-policy": cmd_eval_policy,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ccsrl", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--profile", choices=["full", "fast"], help="override the configured profile")
    ap.add_argument("--seed", type=int, help="override the master seed")
    ap.add_argument("--out", help="output directory (overrides the configuration)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for trajectory simulation")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        cfg = load_config(args.config, profile=args.profile, seed=args.seed, out=args.out)
        p = Paths(cfg.out)
        dump_config(cfg, p.resolved)
        COMMANDS[args.command](cfg, p, args)
    except FingerprintMismatch as exc:
        log.error("%s", exc)
        print(f"expected fingerprint: {exc.expected}\nfound fingerprint:    {exc.found}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (CcsrlError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
