"""Multi-seed comparison of baseline, FIC, SAM and the instance-norm ablation."""

import copy
from dataclasses import dataclass, field

import numpy as np

from fictsc.harness.stats import InsufficientDataError, wilcoxon_signed_rank
from fictsc.harness.train import prepare_data, train

ARMS = ("baseline", "fic", "sam", "in-ablation")
MIN_SEEDS = 10


def arm_config(base, arm):
    cfg = copy.deepcopy(base)
    if arm == "baseline":
        cfg.optimizer, cfg.instance_norm = "plain", False
    elif arm == "fic":
        cfg.optimizer, cfg.instance_norm = "fic", False
    elif arm == "sam":
        cfg.optimizer, cfg.instance_norm = "sam", False
    elif arm == "in-ablation":
        cfg.optimizer, cfg.instance_norm = "plain", True
    else:
        raise ValueError(f"unknown arm {arm!r}; choose from {ARMS}")
    return cfg


@dataclass
class ComparisonReport:
    seeds: list
    arms: list
    runs: dict  # arm -> list of RunReport, in seed order
    tests: dict = field(default_factory=dict)  # name -> WilcoxonResult or error text
    sharpness_ratios: list = field(default_factory=list)

    def accuracies(self, arm):
        return np.array([r.metrics.accuracy for r in self.runs[arm]])

    def mean_time(self, arm):
        return float(np.mean([r.time_per_iter for r in self.runs[arm]]))

    def median_improvement(self, arm="fic", ref="baseline"):
        return float(np.median(self.accuracies(arm) - self.accuracies(ref)))

    def records(self, include_time=True):
        out = [f"seeds={','.join(str(s) for s in self.seeds)}", f"arms={','.join(self.arms)}"]
        for arm in self.arms:
            for seed, r in zip(self.seeds, self.runs[arm]):
                line = (f"arm={arm} seed={seed} accuracy={r.metrics.accuracy!r} "
                        f"balanced_accuracy={r.metrics.balanced_accuracy!r} f1={r.metrics.f1!r} "
                        f"trigger_rate={r.trigger_rate!r} backward_passes={r.backward_passes} steps={r.steps}")
                if r.sharpness_per_sample is not None:
                    line += f" sharpness={r.sharpness_per_sample.sharpness!r}"
                if include_time:
                    line += f" time_per_iter={r.time_per_iter!r}"
                out.append(line)
            out.append(f"arm={arm} mean_accuracy={float(self.accuracies(arm).mean())!r}")
        for name, res in self.tests.items():
            if isinstance(res, str):
                out.append(f"test={name} error={res}")
            else:
                out.append(f"test={name} alternative={res.alternative} statistic={res.statistic!r} "
                           f"pvalue={res.pvalue!r} n={res.n} method={res.method}")
        if "fic" in self.arms and "baseline" in self.arms:
            out.append(f"median_improvement={self.median_improvement()!r}")
        if self.sharpness_ratios:
            out.append(f"sharpness_ratio_median={float(np.median(self.sharpness_ratios))!r}")
        if include_time and "fic" in self.arms and "sam" in self.arms:
            out.append(f"time_per_iter_fic={self.mean_time('fic')!r}")
            out.append(f"time_per_iter_sam={self.mean_time('sam')!r}")
            out.append(f"time_ratio_fic_sam={self.mean_time('fic') / self.mean_time('sam')!r}")
        return out

    def summary(self):
        head = f"{'arm':<12} {'mean acc':>9} {'median acc':>11} {'sec/iter':>10} {'passes/step':>12}"
        lines = [head, "-" * len(head)]
        for arm in self.arms:
            acc = self.accuracies(arm)
            steps = sum(r.steps for r in self.runs[arm]) or 1
            passes = sum(r.backward_passes for r in self.runs[arm]) / steps
            lines.append(f"{arm:<12} {acc.mean():>9.4f} {np.median(acc):>11.4f} "
                         f"{self.mean_time(arm):>10.5f} {passes:>12.2f}")
        for name, res in self.tests.items():
            text = res if isinstance(res, str) else f"p = {res.pvalue:.4g} ({res.alternative}, n={res.n})"
            lines.append(f"wilcoxon {name}: {text}")
        if self.sharpness_ratios:
            lines.append(f"median sharpness ratio fic/baseline: {np.median(self.sharpness_ratios):.3f}")
        return "\n".join(lines)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write("\n".join(self.records()) + "\n")


def _paired_test(a, b, alternative):
    try:
        return wilcoxon_signed_rank(a, b, alternative=alternative)
    except InsufficientDataError as exc:
        return str(exc)


def run_comparison_suite(base_config, seeds, arms=ARMS, progress=None):
    """Train every arm on every seed; seed ``s`` regenerates the synthetic data with seed ``s``
    and initializes the model with seed ``s`` so that arms are paired per seed."""
    seeds = list(seeds)
    if len(seeds) < MIN_SEEDS:
        raise ValueError(f"need at least {MIN_SEEDS} seeds, got {len(seeds)}")
    arms = list(arms)
    for arm in arms:
        arm_config(base_config, arm)  # validates the arm name
    runs = {arm: [] for arm in arms}
    for seed in seeds:
        cfg = copy.deepcopy(base_config)
        cfg.seed = seed
        if cfg.synthetic:
            cfg.recipe.seed = seed
        data = prepare_data(cfg)
        for arm in arms:
            report = train(arm_config(cfg, arm), data=data)
            report.model = None
            runs[arm].append(report)
            if progress is not None:
                progress(arm, seed, report)
    rep = ComparisonReport(seeds, arms, runs)
    if "baseline" in arms:
        base = rep.accuracies("baseline")
        if "fic" in arms:
            rep.tests["fic_vs_baseline"] = _paired_test(rep.accuracies("fic"), base, "greater")
            pairs = [(f.sharpness_per_sample, b.sharpness_per_sample)
                     for f, b in zip(runs["fic"], runs["baseline"])]
            rep.sharpness_ratios = [f.sharpness / b.sharpness for f, b in pairs
                                    if f is not None and b is not None and b.sharpness > 0]
        if "sam" in arms:
            rep.tests["sam_vs_baseline"] = _paired_test(rep.accuracies("sam"), base, "greater")
        if "in-ablation" in arms:
            rep.tests["in_vs_baseline"] = _paired_test(rep.accuracies("in-ablation"), base, "two-sided")
    return rep
