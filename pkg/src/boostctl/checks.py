"""Acceptance checks, one function per criterion.

Each check returns a :class:`CheckResult`.  Checks that need trained or tuned
artifacts accept them as arguments and produce them from scratch otherwise,
so the same code backs ``boostctl verify`` and the acceptance tests.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .ann import AnnController, AnnTrainConfig, generate_dataset, ideal_duty, train_ann
from .converter import equilibrium, get_params
from .kernels import rk4_advance
from .metrics import Trajectory, mae, step_metrics
from .nn import MLP, finite_diff_grad
from .pi import PUBLISHED_PSO
from .ppo import clipped_surrogate, compute_gae, prob_ratio
from .simulate import ConstantDuty, PIControl, ScenarioConfig, run_closed_loop
from .tuning import GAConfig, PIFitness, PSOConfig, ga_optimize, pso_optimize

PASS, FAIL, SKIP = "pass", "fail", "skipped"


@dataclass
class CheckResult:
    number: int
    name: str
    status: str
    detail: str
    seconds: float = 0.0

    @property
    def passed(self):
        return self.status == PASS

    def line(self):
        return f"[{self.status.upper():7s}] {self.number:2d} {self.name}: {self.detail} " \
               f"({self.seconds:.1f} s)"

    def as_dict(self):
        return {"criterion": self.number, "name": self.name, "status": self.status,
                "detail": self.detail, "seconds": round(self.seconds, 3)}


def _timed(number, name, fn):
    start = time.perf_counter()
    status, detail = fn()
    return CheckResult(number, name, status, detail, time.perf_counter() - start)


def _verdict(ok):
    return PASS if ok else FAIL


# -- 1: gradients -------------------------------------------------------------------

GRADIENT_SHAPES = ([3, 32, 32, 32, 1], [3, 8, 1], [2, 16, 16, 1], [4, 5, 3], [1, 1],
                   [3, 12, 7, 2], [5, 20, 2])


def gradient_error(net, rng, batch=4, eps=1e-5):
    """Largest relative deviation between backprop and central differences.

    Entries are compared against a floor of ``1e-6`` times the largest gradient
    entry, so near-zero gradients do not turn roundoff into large ratios.
    """
    x = rng.normal(size=(batch, net.layer_sizes[0]))
    coeff = rng.normal(size=(batch, net.layer_sizes[-1]))

    def loss(out):
        return float(np.sum(coeff * out))

    out, cache = net.forward(x)
    analytic = net.backward(cache, coeff)
    numeric = finite_diff_grad(net, loss, x, eps)
    scale = max(float(np.max(np.abs(a))) for a in analytic.arrays())
    return analytic.max_relative_error(numeric, floor=max(scale * 1e-6, 1e-12))


def check_gradients(n_nets=20, tol=1e-4, seed=0):
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for k in range(n_nets):
            sizes = GRADIENT_SHAPES[k % len(GRADIENT_SHAPES)]
            hidden = "relu" if k % 5 == 4 else "tanh"
            output = "tanh" if k % 3 == 2 else "identity"
            net = MLP.init(sizes, hidden, output, seed=seed * 1000 + k)
            for b in net.biases:
                b[:] = rng.normal(scale=0.1, size=b.shape)
            worst = max(worst, gradient_error(net, rng))
        return _verdict(worst < tol), f"{n_nets} nets, max relative error {worst:.2e} (< {tol:g})"
    return _timed(1, "gradient oracle", run)


# -- 2: plant equilibrium -----------------------------------------------------------

def check_equilibrium(duties=(0.3, 0.5, 0.6), params_set="desk"):
    def run():
        worst_v = worst_p = 0.0
        for d in duties:
            scenario = ScenarioConfig(params_set=params_set, v_ref=48.0)
            traj = run_closed_loop(ConstantDuty(d), scenario)
            v, i = traj.v_out[-1], traj.i_L[-1]
            v_in = traj.v_in[-1]
            target = equilibrium(scenario.params(), d, v_in).v_C
            worst_v = max(worst_v, abs(v - target) / target)
            p_out = v * v / scenario.params().R
            worst_p = max(worst_p, abs(v_in * i - p_out) / p_out)
        ok = worst_v < 1e-3 and worst_p < 5e-3
        return _verdict(ok), (f"duties {list(duties)}: voltage error {100 * worst_v:.2e}% "
                              f"(< 0.1%), power mismatch {100 * worst_p:.2e}% (< 0.5%)")
    return _timed(2, "plant equilibrium", run)


# -- 3: integrator order --------------------------------------------------------------

def euler_reference(params, duty, v_in, i0, v0, horizon, h):
    """Richardson-extrapolated forward Euler (second order) with step ``h``."""
    def euler(step):
        i, v = i0, v0
        off = 1.0 - duty
        for _ in range(int(round(horizon / step))):
            di = (v_in - off * v) / params.L
            dv = (off * i - v / params.R) / params.C
            i, v = max(i + step * di, 0.0), v + step * dv
        return np.array([i, v])
    return 2.0 * euler(h / 2.0) - euler(h)


def integration_error(params, dt, duty=0.5, v_in=24.0, horizon=2e-4, oracle_div=1000):
    n = int(round(horizon / dt))
    i, v = rk4_advance(0.0, 0.0, duty, v_in, params.L, params.C, params.R, dt, n)
    ref = euler_reference(params, duty, v_in, 0.0, 0.0, horizon, dt / oracle_div)
    return float(np.linalg.norm(np.array([i, v]) - ref) / np.linalg.norm(ref))


def check_integrator_order(dt=4e-5, min_ratio=12.0):
    def run():
        params = get_params("desk")
        coarse = integration_error(params, dt)
        fine = integration_error(params, dt / 2.0)
        ratio = coarse / fine
        return _verdict(ratio >= min_ratio), (f"error {coarse:.3e} -> {fine:.3e} on halving dt, "
                                              f"ratio {ratio:.1f} (>= {min_ratio:g})")
    return _timed(3, "integrator order", run)


# -- 4: metrics -----------------------------------------------------------------------

def first_order_response(tau, v_ref=48.0, dt=2e-4, horizon=1.0):
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    return Trajectory.from_output(v_ref * (1.0 - np.exp(-t / tau)), dt, v_ref)


def check_metrics(taus=(0.01, 0.05, 0.2), dt=2e-4):
    def run():
        worst_rise = worst_settle = worst_os = 0.0
        for tau in taus:
            m = step_metrics(first_order_response(tau, dt=dt))
            worst_rise = max(worst_rise, abs(m.rise_time - tau * math.log(9.0)))
            worst_settle = max(worst_settle, abs(m.settling_time - tau * math.log(50.0)))
            worst_os = max(worst_os, abs(m.overshoot_pct))
        ok = worst_rise <= dt and worst_settle <= dt and worst_os == 0.0
        return _verdict(ok), (f"tau {list(taus)}: rise off by {worst_rise:.2e} s, settle off by "
                              f"{worst_settle:.2e} s (one sample {dt:g} s), overshoot {worst_os}")
    return _timed(4, "metrics oracle", run)


# -- 5: GAE ---------------------------------------------------------------------------

def brute_force_advantages(rewards, values, bootstrap, gamma):
    n = len(rewards)
    out = np.empty(n)
    for t in range(n):
        ret = sum(gamma ** (k - t) * rewards[k] for k in range(t, n))
        out[t] = ret + gamma ** (n - t) * bootstrap - values[t]
    return out


def check_gae(n_sequences=100, length=10, gamma=0.99, seed=0):
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_sequences):
            r = rng.normal(size=length)
            v = rng.normal(size=length)
            boot = float(rng.normal())
            adv, ret = compute_gae(r, v, boot, gamma, 1.0)
            worst = max(worst, float(np.max(np.abs(adv - brute_force_advantages(r, v, boot,
                                                                                   gamma)))))
            worst = max(worst, float(np.max(np.abs(ret - (adv + v)))))
        return _verdict(worst <= 1e-12), (f"{n_sequences} sequences, max deviation "
                                           f"{worst:.1e} (<= 1e-12)")
    return _timed(5, "GAE oracle", run)


# -- 6: PPO algebra ---------------------------------------------------------------------

def check_ppo_algebra(seed=0):
    from .ppo import PPOConfig, actor_loss_and_grads, make_agent

    def run():
        rng = np.random.default_rng(seed)
        cfg = PPOConfig(hidden_layers=2, neurons=16, seed=seed)
        policy, _ = make_agent(cfg)
        obs = rng.normal(scale=0.3, size=(32, 3))
        actions = np.array([policy.sample(o, rng)[0] for o in obs])
        old = policy.log_prob(obs, actions)
        adv = rng.normal(size=32)
        loss, _, _, ratios = actor_loss_and_grads(policy, obs, actions, old, adv, cfg.clip)
        ratio_dev = float(np.max(np.abs(ratios - 1.0)))
        surrogate_ok = abs(loss + float(np.mean(adv))) <= 1e-12
        hand = (clipped_surrogate(2.0, 1.0, 0.2), clipped_surrogate(0.5, -1.0, 0.2))
        hand_ok = float(hand[0]) == 1.2 and float(hand[1]) == -0.8
        inside = prob_ratio(np.log(rng.uniform(0.81, 1.19, size=64)), 0.0)
        clip_frac = float(np.mean(np.abs(inside - 1.0) > 0.2))
        ok = ratio_dev <= 1e-12 and surrogate_ok and hand_ok and clip_frac == 0.0
        return _verdict(ok), (f"ratio deviation {ratio_dev:.1e}, surrogate equals mean advantage: "
                              f"{surrogate_ok}, hand cases {float(hand[0])}/{float(hand[1])}, "
                              f"clip fraction inside band {clip_frac}")
    return _timed(6, "PPO algebra", run)


# -- 7: tuners ---------------------------------------------------------------------------

def sphere(center):
    center = np.asarray(center, dtype=np.float64)

    def objective(x):
        return float(np.sum((np.asarray(x) - center) ** 2))
    return objective


def check_tuners(tuned=None, seed=0, workers=1, tolerance=0.10):
    """``tuned`` maps ``'pso'``/``'ga'`` to a (Candidate, history) pair; tunes if omitted."""
    from .tuning import evaluation_map

    def run():
        box = dict(lower=(-1.0, -1.0), upper=(1.0, 1.0))
        target = (0.3, -0.2)
        pso, _ = pso_optimize(PSOConfig(seed=seed, **box), sphere(target))
        ga, _ = ga_optimize(GAConfig(seed=seed, **box), sphere(target))
        convex_ok = pso.fitness < 1e-8 and ga.fitness < 1e-6
        scenario = ScenarioConfig(params_set="desk", v_ref=48.0)
        objective = PIFitness(scenario)
        results = dict(tuned or {})
        with evaluation_map(workers) as map_fn:
            if "pso" not in results:
                results["pso"] = pso_optimize(PSOConfig(seed=seed), objective, map_fn)
            if "ga" not in results:
                results["ga"] = ga_optimize(GAConfig(seed=seed), objective, map_fn)
        baseline = objective(np.array(PUBLISHED_PSO))
        f_pso = results["pso"][0].fitness
        f_ga = results["ga"][0].fitness
        agree = abs(f_pso - f_ga) <= tolerance * min(f_pso, f_ga)
        real_ok = f_pso <= baseline and f_ga <= baseline and agree
        return _verdict(convex_ok and real_ok), (
            f"sphere: PSO {pso.fitness:.1e} (< 1e-8), GA {ga.fitness:.1e} (< 1e-6); "
            f"desk 48 V MAE: PSO {f_pso:.4f}, GA {f_ga:.4f}, published gains {baseline:.4f}, "
            f"agree within {tolerance:.0%}: {agree}")
    return _timed(7, "tuner soundness", run)


# -- 8: PI regulation -------------------------------------------------------------------------

def check_pi_regulation(gains=PUBLISHED_PSO, v_refs=(48.0, 54.0, 60.0), limit_pct=0.5):
    def run():
        parts, ok = [], True
        for v_ref in v_refs:
            traj = run_closed_loop(PIControl(gains), ScenarioConfig(v_ref=v_ref))
            e_ss = step_metrics(traj).steady_state_error
            pct = 100.0 * abs(e_ss) / v_ref
            ok &= pct < limit_pct
            parts.append(f"{v_ref:g} V: {pct:.4f}%")
        return _verdict(ok), f"|e_ss| {', '.join(parts)} (< {limit_pct}%)"
    return _timed(8, "PI regulation", run)


# -- 9: ANN -----------------------------------------------------------------------------------

def ann_grid_error(controller, n=50):
    lo_in, hi_in = controller.v_in_range
    lo_t, hi_t = controller.v_target_range
    vi, vt = np.meshgrid(np.linspace(lo_in, hi_in, n), np.linspace(lo_t, hi_t, n))
    pred = controller.raw_duty(vi.ravel(), vt.ravel())
    return float(np.max(np.abs(pred - ideal_duty(vi.ravel(), vt.ravel()))))


def train_default_ann(seed=0, n=100_000):
    dataset = generate_dataset(n=n, seed=seed)
    net, train_mse, test_mse = train_ann(dataset, AnnTrainConfig(seed=seed))
    return AnnController(net), train_mse, test_mse


def check_ann(controller=None, v_refs=(48.0, 54.0, 60.0), seed=0):
    def run():
        ctrl = controller if controller is not None else train_default_ann(seed)[0]
        grid = ann_grid_error(ctrl)
        worst = 0.0
        for v_ref in v_refs:
            traj = run_closed_loop(ctrl, ScenarioConfig(v_ref=v_ref))
            e_ss = step_metrics(traj).steady_state_error
            worst = max(worst, 100.0 * abs(e_ss) / v_ref)
        ok = grid <= 0.01 and worst < 2.0
        return _verdict(ok), (f"grid duty error {grid:.4f} (<= 0.01), closed-loop steady state "
                              f"within {worst:.3f}% (< 2%)")
    return _timed(9, "ANN accuracy", run)


# -- 10: PPO training ---------------------------------------------------------------------------

def band_entry_time(traj, band_pct=5.0):
    """Time after which the output never leaves the band, or NaN if it ends outside."""
    inside = np.abs(traj.v_out - traj.v_ref) <= band_pct / 100.0 * traj.v_ref
    if not inside[-1]:
        return math.nan
    outside = np.flatnonzero(~inside)
    return 0.0 if outside.size == 0 else float(traj.t[outside[-1] + 1])


def final_abs_error(traj, window=0.2):
    n = int(round(window / traj.dt))
    return float(np.mean(np.abs(traj.v_ref - traj.v_out[-n:])))


def ppo_outcome(trained, untrained, ratio_limit=0.25):
    """``(ok, detail)`` comparing evaluation trajectories of a trained and untrained policy."""
    entry = band_entry_time(trained)
    e_trained, e_untrained = final_abs_error(trained), final_abs_error(untrained)
    ok = (not math.isnan(entry)) and entry < 1.0 and e_trained < ratio_limit * e_untrained
    entry_txt = "never" if math.isnan(entry) else f"{entry:.4f} s"
    return ok, (f"holds the 5% band from {entry_txt}; final 0.2 s mean |e| {e_trained:.4f} V vs "
                f"untrained {e_untrained:.4f} V (limit {ratio_limit:.0%})")


def check_ppo_training(outcome=None, seed=0):
    """``outcome`` is a :class:`~boostctl.training.TrainingOutcome`; trains if omitted."""
    from .training import train_for_reference

    def run():
        res = outcome if outcome is not None else train_for_reference(48.0, seed=seed)
        ok, detail = ppo_outcome(res.trained_trajectory, res.untrained_trajectory)
        ok = ok and res.seconds < 600.0
        note = f"lr {res.learning_rate:g}"
        if res.diverged_default:
            note += f" (default diverged: {res.divergence})"
        return _verdict(ok), f"{detail}; {note}; training {res.seconds:.0f} s (< 600 s)"
    return _timed(10, "PPO training outcome", run)


# -- 11: orderings --------------------------------------------------------------------------------

def _metric(report, controller, profile, v_ref, key):
    row = report.row(controller, profile, v_ref)
    if row is None or row.status != "ok":
        return None
    return row.as_dict()[key]


def check_orderings(report, v_refs=(48.0, 54.0, 60.0), pis=("pi-pso", "pi-ga")):
    """Qualitative orderings over every reference and both PI tunings."""
    def run():
        lines, failures, missing = [], [], []

        def get(controller, profile, v_ref, key):
            value = _metric(report, controller, profile, v_ref, key)
            if value is None:
                missing.append(f"{controller}/{profile}/{v_ref:g}")
            return value

        def record(tag, ok, text):
            lines.append(f"{tag} {text}: {'ok' if ok else 'FAIL'}")
            if not ok:
                failures.append(tag)

        for v_ref in v_refs:
            os_rl = get("rl", "step", v_ref, "overshoot_pct")
            os_ann = get("ann", "step", v_ref, "overshoot_pct")
            for pi in pis:
                os_pi = get(pi, "step", v_ref, "overshoot_pct")
                if None not in (os_pi, os_rl, os_ann):
                    record("(a)", _gt(os_pi, os_rl) and _gt(os_pi, os_ann),
                           f"{v_ref:g} V variable-input overshoot {pi} {os_pi:.3f}% > "
                           f"RL {os_rl:.3f}%, ANN {os_ann:.3f}%")
        for v_ref in v_refs:
            fixed = get("rl", "fixed", v_ref, "settle_s")
            step = get("rl", "step", v_ref, "settle_s")
            if None not in (fixed, step):
                record("(b)", _le(step, 1.35 * fixed),
                       f"{v_ref:g} V RL settling {step:.4f} s within 35% of {fixed:.4f} s")
            for pi in pis:
                fixed = get(pi, "fixed", v_ref, "settle_s")
                step = get(pi, "step", v_ref, "settle_s")
                if None not in (fixed, step):
                    record("(b)", _gt(step, 1.5 * fixed),
                           f"{v_ref:g} V {pi} settling {step:.4f} s > 1.5 x {fixed:.4f} s")
        for v_ref in v_refs:
            rl = get("rl", "fixed", v_ref, "settle_s")
            ann = get("ann", "fixed", v_ref, "settle_s")
            if None not in (rl, ann):
                record("(c)", _lt(rl, ann), f"{v_ref:g} V fixed-input settling RL {rl:.4f} s < "
                                            f"ANN {ann:.4f} s")
        detail = "; ".join(lines)
        if missing:
            detail = f"missing or failed cells {sorted(set(missing))}; {detail}"
            return (SKIP if not lines else FAIL), detail
        return _verdict(not failures), detail
    return _timed(11, "ordering properties", run)


def _le(a, b):
    return not (math.isnan(a) or math.isnan(b)) and a <= b


def _lt(a, b):
    return not (math.isnan(a) or math.isnan(b)) and a < b


def _gt(a, b):
    return not (math.isnan(a) or math.isnan(b)) and a > b


# -- verify ------------------------------------------------------------------------------------

def _skipped(number, name, reason):
    return CheckResult(number, name, SKIP, reason)


def tuned_from_artifacts(artifacts):
    """Tuner outputs from ``pi_pso.json``/``pi_ga.json`` as ``{method: (Candidate, history)}``."""
    import json
    from pathlib import Path

    from .tuning import Candidate

    found = {}
    for method in ("pso", "ga"):
        path = Path(artifacts) / f"pi_{method}.json"
        if path.exists():
            doc = json.loads(path.read_text())
            found[method] = (Candidate(np.array([doc["k_p"], doc["k_i"]]), doc["mae"]),
                             doc.get("history", []))
    return found


def outcome_from_checkpoint(directory):
    """Rebuild a training outcome from a saved agent by re-evaluating both policies."""
    from .ppo import PPOConfig, load_agent, make_agent, nominal_duty
    from .training import TrainingOutcome, evaluate_policy

    policy, critic, header = load_agent(directory)
    config = PPOConfig(**header["config"])
    scenario = ScenarioConfig.from_dict(header["scenario"])
    p = scenario.params()
    untrained, _ = make_agent(config, p.duty_min, p.duty_max, nominal_duty(p, scenario.v_ref))
    return TrainingOutcome(None, scenario, header.get("learning_rate", config.lr_actor),
                           header.get("diverged_default", False), header.get("divergence", ""),
                           evaluate_policy(untrained, scenario, config.soft_start),
                           evaluate_policy(policy, scenario, config.soft_start),
                           header.get("train_seconds", math.nan))


def verify(report=None, artifacts=None, train_missing=False, seed=0, workers=1):
    """Run every criterion; returns the list of :class:`CheckResult`.

    Artifact-backed criteria (7, 9, 10) read from ``artifacts``.  What is
    missing is produced from scratch when ``train_missing`` is set and marked
    skipped otherwise; criterion 11 is skipped without a report.
    """
    from pathlib import Path

    from .harness import ppo_dir

    results = [check_gradients(seed=seed), check_equilibrium(), check_integrator_order(),
               check_metrics(), check_gae(seed=seed), check_ppo_algebra(seed=seed)]
    art = Path(artifacts) if artifacts is not None else None

    tuned = tuned_from_artifacts(art) if art is not None else {}
    if len(tuned) == 2 or train_missing:
        results.append(check_tuners(tuned, seed=seed, workers=workers))
    else:
        results.append(_skipped(7, "tuner soundness", "pi_pso.json / pi_ga.json missing"))
    results.append(check_pi_regulation())

    ann_path = art / "ann.json" if art is not None else None
    if ann_path is not None and ann_path.exists():
        results.append(check_ann(AnnController.load(ann_path)))
    elif train_missing:
        results.append(check_ann(seed=seed))
    else:
        results.append(_skipped(9, "ANN accuracy", "ann.json missing"))

    agent = ppo_dir(art, 48.0) if art is not None else None
    if agent is not None and (agent / "agent.json").exists():
        results.append(check_ppo_training(outcome_from_checkpoint(agent)))
    elif train_missing:
        results.append(check_ppo_training(seed=seed))
    else:
        results.append(_skipped(10, "PPO training outcome", "PPO checkpoint for 48 V missing"))

    if report is not None:
        results.append(check_orderings(report))
    else:
        results.append(_skipped(11, "ordering properties", "no report given"))
    return results


def exit_status(results):
    return 0 if all(r.passed for r in results) else 1
