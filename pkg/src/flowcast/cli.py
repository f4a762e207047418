"""Command-line frontend: ingest -> cluster -> learn -> predict -> evaluate.

Every command echoes the config hash, writes its outputs atomically
(temp file + rename) and drops a JSON run manifest next to them.
Exit codes: 2 parse errors, 3 missing model file, 4 numerical failure.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from . import clustering, evaluation, fkkf, hyperopt, spectral, synth, trace_io
from .config import RunConfig, load_config
from .errors import FlowcastError, NumericalFailure, ParseError

DURATION_BUCKETS = (0.1, 1.0, 100.0)


class _Ctx:
    def __init__(self, config: RunConfig, out_dir: Path, seed: int):
        self.config = config
        self.out_dir = out_dir
        self.seed = seed


def _atomic_write(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_manifest(ctx: _Ctx, command: str, outputs) -> None:
    manifest = {
        "command": command,
        "config_hash": ctx.config.config_hash(),
        "seed": ctx.seed,
        "outputs": [str(p) for p in outputs],
    }
    path = ctx.out_dir / f"manifest_{command}.json"
    _atomic_write(path, lambda tmp: Path(tmp).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"))


def _echo_hash(ctx: _Ctx) -> None:
    click.echo(f"config_hash={ctx.config.config_hash()}")


def _load_store(path) -> list:
    return trace_io.load_traces(path, "csv_binned")


def _signature_chunk_cfg(ctx: _Ctx):
    exp = ctx.config.experiment
    from .spectral import ChunkConfig
    return ChunkConfig(sample_interval_s=exp.sample_interval_s,
                       chunk_interval_s=exp.chunk_interval_s,
                       chunk_length_s=ctx.config.clustering.signature_chunk_length_s)


def _resolve_hyper(ctx: _Ctx, train_flows, chunk_length_s):
    hyp = ctx.config.hyper
    if hyp.source == "fixed":
        return hyp.fixed
    best, _ = hyperopt.grid_search(
        train_flows, hyp.grid, hyp.validation, cfg=ctx.config.experiment,
        chunk_length_s=chunk_length_s, holdout_fraction=hyp.holdout_fraction,
        audit_path=ctx.out_dir / "hyper_audit.csv")
    return best


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file (defaults apply when omitted).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Directory for artifacts.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Spectral kernel Kalman filtering for per-flow traffic prediction."""
    try:
        config = load_config(config_path)
    except ParseError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    if seed is not None:
        config = load_config(config_path, overrides={"seed": seed})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx.obj = _Ctx(config=config, out_dir=out, seed=config.seed)


def _run(ctx_obj, command, fn):
    try:
        outputs = fn()
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(2)
    except FileNotFoundError as exc:
        click.echo(f"missing file: {exc}", err=True)
        sys.exit(3)
    except NumericalFailure as exc:
        click.echo(f"numerical failure in matrix {exc.matrix}: {exc}", err=True)
        sys.exit(4)
    except FlowcastError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    _write_manifest(ctx_obj, command, outputs)


@main.command()
@click.argument("input_path", type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["csv_events", "csv_binned"]),
              default="csv_events")
@click.pass_obj
def ingest(ctx, input_path, fmt):
    """Normalize raw CSVs (a file or a directory of them) into the store."""
    _echo_hash(ctx)

    def work():
        t_s = ctx.config.experiment.sample_interval_s
        source = Path(input_path)
        if source.is_dir():
            traces = []
            for child in sorted(source.glob("*.csv")):
                traces.extend(trace_io.load_traces(child, fmt,
                                                   sample_interval_s=t_s))
            traces.sort(key=lambda t: (t.key, t.start_time))
        else:
            traces = trace_io.load_traces(source, fmt, sample_interval_s=t_s)
        store = ctx.out_dir / "traces.csv"
        _atomic_write(store, lambda tmp: trace_io.write_binned(traces, tmp))
        buckets = [0, 0, 0, 0]
        for trace in traces:
            d = trace.duration_s
            if d < DURATION_BUCKETS[0]:
                buckets[0] += 1
            elif d < DURATION_BUCKETS[1]:
                buckets[1] += 1
            elif d < DURATION_BUCKETS[2]:
                buckets[2] += 1
            else:
                buckets[3] += 1
        click.echo(f"flows={len(traces)}")
        click.echo(f"duration_buckets <0.1s={buckets[0]} 0.1-1s={buckets[1]} "
                   f"1-100s={buckets[2]} >=100s={buckets[3]}")
        return [store]

    _run(ctx, "ingest", work)


@main.command()
@click.argument("traces_path", type=click.Path())
@click.pass_obj
def cluster(ctx, traces_path):
    """Group flows by spectral similarity; write the assignment CSV."""
    _echo_hash(ctx)

    def work():
        flows = _load_store(traces_path)
        clu = ctx.config.clustering
        groups, _ = clustering.cluster(flows, clu.max_groups,
                                       clu.distance_threshold,
                                       _signature_chunk_cfg(ctx),
                                       clu.signature_frames)
        rows = clustering.assignment_rows(flows, groups, _signature_chunk_cfg(ctx),
                                          clu.signature_frames)
        out = ctx.out_dir / "groups.csv"

        def write(tmp):
            with open(tmp, "w", newline="") as fh:
                fh.write("flow_id,group_id,distance_to_centroid\n")
                for flow_id, group_id, dist in rows:
                    fh.write(f"{flow_id},{group_id},{format(dist, '.12g')}\n")

        _atomic_write(out, write)
        click.echo(f"groups={len(groups)}")
        return [out]

    _run(ctx, "cluster", work)


def _read_groups(path):
    groups: dict[int, list] = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            flow_id, group_id, _ = line.strip().split(",")
            groups.setdefault(int(group_id), []).append(int(flow_id))
    groups.pop(-1, None)
    return groups


@main.command()
@click.argument("traces_path", type=click.Path())
@click.option("--groups", "groups_path", type=click.Path(), required=True)
@click.option("--group-id", type=int, required=True)
@click.option("--chunk-length", type=float, default=None,
              help="Chunk length in seconds (default: first sweep entry).")
@click.pass_obj
def learn(ctx, traces_path, groups_path, group_id, chunk_length):
    """Learn a model for one flow group and persist it."""
    _echo_hash(ctx)

    def work():
        flows = _load_store(traces_path)
        members = _read_groups(groups_path).get(group_id)
        if not members:
            raise FlowcastError(f"group {group_id} not found in {groups_path}")
        group_flows = [flows[i] for i in members]
        exp = ctx.config.experiment
        length = chunk_length if chunk_length is not None else exp.chunk_lengths_s[0]
        hyper = _resolve_hyper(ctx, group_flows, length)
        model = fkkf.learn(group_flows, hyper, exp.subspace_size,
                           exp.chunk_config(length), exp.window_config(length),
                           kept_dim=exp.kept_dim, bandwidth_seed=exp.bandwidth_seed)
        out = ctx.out_dir / f"model_group{group_id}.npz"
        _atomic_write(out, lambda tmp: fkkf.save_model(model, tmp))
        click.echo(f"model={out} pairs={model.n_pairs} subspace={model.subspace_size}")
        return [out]

    _run(ctx, "learn", work)


@main.command()
@click.argument("traces_path", type=click.Path())
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--flow-id", type=int, required=True)
@click.option("--start-step", type=int, default=None,
              help="Chunk index of the first observation (default: located peak).")
@click.pass_obj
def predict(ctx, traces_path, model_path, flow_id, start_step):
    """Filter a flow prefix and emit the (t, predicted, variance) forecast CSV."""
    _echo_hash(ctx)

    def work():
        if not os.path.exists(model_path):
            raise FileNotFoundError(model_path)
        model = fkkf.load_model(model_path)
        flows = _load_store(traces_path)
        if flow_id >= len(flows):
            raise FlowcastError(f"flow {flow_id} not in store ({len(flows)} flows)")
        flow = flows[flow_id]
        exp = ctx.config.experiment
        fe = model.frontend
        hop = fe.chunk_cfg.hop_samples
        start = start_step
        if start is None:
            start = evaluation.locate_peak_rise(flow.samples,
                                                fe.chunk_cfg.chunk_interval_s,
                                                fe.chunk_cfg.sample_interval_s,
                                                exp.peak_window_s, exp.peak_factor)
            if start is None:
                raise FlowcastError("no peak rise located; pass --start-step")
        raw = fkkf.observation_frames(flow.samples, fe.chunk_cfg,
                                      fe.chunk_cfg.chunk_length_s)
        end = start + exp.observe_steps
        if raw.shape[0] < end:
            raise FlowcastError("flow too short for the observation prefix")
        observed = fe.reduce_observations(raw[start:end])
        steps = exp.horizon_steps
        pred = fkkf.run_filter(model, observed, steps)
        var_kbit = _kbit_variance(model, pred)
        t_s = fe.chunk_cfg.sample_interval_s
        t0 = end * fe.chunk_cfg.chunk_interval_s
        horizon_samples = pred.mean_kbit.size
        times = t0 + np.arange(horizon_samples) * t_s
        actual = np.full(horizon_samples, np.nan)
        have = flow.samples[end * hop:end * hop + horizon_samples]
        actual[:have.size] = have
        out = ctx.out_dir / f"prediction_flow{flow_id}.csv"
        _atomic_write(out, lambda tmp: evaluation.write_prediction_csv(
            times, actual, pred.mean_kbit, var_kbit, tmp))
        click.echo(f"forecast_steps={steps} rows={horizon_samples}")
        return [out]

    _run(ctx, "predict", work)


def _kbit_variance(model, pred):
    """Per-sample forecast variance through the linear inverse transforms.

    Cross-chunk covariance is ignored; overlapping chunk variances are
    averaged with the same weights as the means.
    """
    fe = model.frontend
    std, basis = fe.reducers[0]
    width = fe.horizon_samples()[0]
    hop = fe.chunk_cfg.hop_samples
    frame_dim = basis.original_dim
    unit = np.zeros(frame_dim)
    rows = []
    for j in range(frame_dim):
        unit[:] = 0
        unit[j] = 1.0
        rows.append(spectral.inverse_frame(unit, width))
    inv_op = np.array(rows).T * std.scales()[None, :]  # (width, frame_dim)
    lift = inv_op @ basis.components  # (width, kept)
    if pred.mean_frames.shape[0] == 0:
        return np.empty(0)
    chunk_var = (lift[None, :, :] ** 2 * pred.cov_diag[:, None, :]).sum(axis=2)
    n_steps = pred.mean_frames.shape[0]
    total = np.zeros((n_steps - 1) * hop + width)
    cover = np.zeros_like(total)
    for i in range(n_steps):
        total[i * hop:i * hop + width] += chunk_var[i]
        cover[i * hop:i * hop + width] += 1.0
    return (total / cover ** 2)[:pred.mean_kbit.size]


@main.command()
@click.argument("traces_path", type=click.Path())
@click.option("--groups", "groups_path", type=click.Path(), required=True)
@click.pass_obj
def evaluate(ctx, traces_path, groups_path):
    """Leave-one-out evaluation of every group; write the table-style report."""
    _echo_hash(ctx)

    def work():
        flows = _load_store(traces_path)
        group_map = _read_groups(groups_path)
        exp = ctx.config.experiment
        reports = []
        optimal_lengths = []
        for group_id in sorted(group_map):
            members = [flows[i] for i in group_map[group_id]]
            if len(members) < 2:
                continue
            hyper = _resolve_hyper(ctx, members, exp.chunk_lengths_s[0])
            report, _ = evaluation.build_group_report(group_id, members, hyper, exp)
            reports.append(report)
            optimal_lengths.append(report.optimal_chunk_len_s)
            click.echo(f"group {group_id}: pred_error={report.pred_error_optimal:+.3f} "
                       f"constant={report.constant_error:+.3f} "
                       f"optimal_len={report.optimal_chunk_len_s}s "
                       f"quality={report.quality}")
        out = ctx.out_dir / "report.csv"
        meta = {"config_hash": ctx.config.config_hash(), "seed": ctx.seed,
                "error_aggregation": "mean_signed"}
        _atomic_write(out, lambda tmp: evaluation.write_report_csv(reports, tmp, meta))
        if optimal_lengths:
            click.echo(f"mean_optimal_chunk_len_s={np.mean(optimal_lengths):.3f}")
        return [out]

    _run(ctx, "evaluate", work)


@main.command()
@click.argument("traces_path", type=click.Path())
@click.option("--groups", "groups_path", type=click.Path(), required=True)
@click.option("--group-id", type=int, required=True)
@click.pass_obj
def sweep(ctx, traces_path, groups_path, group_id):
    """Chunk-length sweep for one group; write per-length errors."""
    _echo_hash(ctx)

    def work():
        flows = _load_store(traces_path)
        members = _read_groups(groups_path).get(group_id)
        if not members:
            raise FlowcastError(f"group {group_id} not found")
        group_flows = [flows[i] for i in members]
        exp = ctx.config.experiment
        hyper = _resolve_hyper(ctx, group_flows, exp.chunk_lengths_s[0])
        optimal, per_length = evaluation.chunk_length_sweep(group_flows, hyper, exp)
        out = ctx.out_dir / f"sweep_group{group_id}.csv"

        def write(tmp):
            with open(tmp, "w", newline="") as fh:
                fh.write("chunk_length_s,pred_error,constant_error,ar_error\n")
                for length in sorted(per_length):
                    r = per_length[length]
                    fh.write(f"{format(length, '.12g')},{format(r.pred_error, '.12g')},"
                             f"{format(r.constant_error, '.12g')},"
                             f"{format(r.ar_error, '.12g')}\n")

        _atomic_write(out, write)
        click.echo(f"optimal_chunk_len_s={optimal}")
        return [out]

    _run(ctx, "sweep", work)


@main.command(name="synth")
@click.pass_obj
def synth_cmd(ctx):
    """Generate synthetic recurring-flow groups into the binned store."""
    _echo_hash(ctx)

    def work():
        cfg = ctx.config.synth
        templates = synth.default_templates(cfg.n_groups, cfg.peak_kbit)
        flows = []
        truth_rows = []
        for g, template in enumerate(templates):
            group = synth.generate_group(template, cfg.flows_per_group,
                                         cfg.duration_s,
                                         ctx.config.experiment.sample_interval_s,
                                         seed=ctx.seed + g, group_id=g)
            for flow in group:
                truth_rows.append((len(flows), g))
                flows.append(flow)
        store = ctx.out_dir / "traces.csv"
        _atomic_write(store, lambda tmp: trace_io.write_binned(flows, tmp))
        truth = ctx.out_dir / "truth_groups.csv"

        def write_truth(tmp):
            with open(tmp, "w", newline="") as fh:
                fh.write("flow_id,group_id\n")
                for flow_id, group_id in truth_rows:
                    fh.write(f"{flow_id},{group_id}\n")

        _atomic_write(truth, write_truth)
        click.echo(f"flows={len(flows)} groups={cfg.n_groups}")
        return [store, truth]

    _run(ctx, "synth", work)


if __name__ == "__main__":
    main()
