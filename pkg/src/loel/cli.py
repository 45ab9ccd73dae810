"""Command-line interface.

Subcommands cover the full pipeline:

    synth    generate campaign CSVs (training grid, optional test events
             and raw waveform directories)
    pick     waveform event directories -> dTOA event table
    train    event table -> model-bank JSON
    locate   bank + events -> prediction JSON
    map      bank + one event -> likelihood-map CSV / PGM raster
    eval     predictions + truth table -> RMSE
    sweep    config -> grid-spacing benchmark report CSV

Exit status: 0 on success, 1 on usage errors, 2 on data or validation
errors (malformed files carry a line-numbered diagnostic).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import locate as loc
from .config import (
    campaign_from_config,
    config_hash,
    geometry_from_config,
    layout_from_config,
    load_config,
    swarm_from_config,
)
from .errors import DataFormatError, LoelError
from .evaluate import rmse, run_sweep, write_report_csv, write_timing_csv
from .signal import (
    AEEvent,
    dtoa_vector,
    pick_onset,
    read_event_table,
    read_waveform_csv,
    sensor_pairs,
    write_event_table,
    write_waveform_csv,
)
from .synthetic import (
    SyntheticCampaign,
    generate_grid,
    sample_test_points,
    synth_dtoa,
    synth_waveform,
)

USAGE_ERROR = 1
DATA_ERROR = 2


class _CliParser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we want 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_config_arg(args):
    return load_config(getattr(args, "config", None))


def _campaign(cfg, args) -> SyntheticCampaign:
    campaign = campaign_from_config(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["campaign"]["seed"] = args.seed
        campaign = SyntheticCampaign(
            geometry=campaign.geometry, layout=campaign.layout,
            spacing=campaign.spacing, dtoa_noise_std=campaign.dtoa_noise_std,
            seed=args.seed)
    if getattr(args, "spacing", None) is not None:
        campaign = campaign.with_spacing(args.spacing)
        cfg["campaign"]["spacing_mm"] = args.spacing
    return campaign


def _cmd_synth(args) -> int:
    cfg = _load_config_arg(args)
    campaign = _campaign(cfg, args)
    pairs = campaign.pairs
    training = generate_grid(campaign)
    events = [
        AEEvent(event_id=f"grid-{i:05d}", x_mm=p[0], y_mm=p[1], dtoa=d)
        for i, (p, d) in enumerate(training)
    ]
    write_event_table(args.out, events, pairs)
    print(f"wrote {len(events)} training events to {args.out}")

    if args.test_events:
        rng = np.random.default_rng([campaign.seed, 0xE0E])
        points = sample_test_points(campaign.geometry, args.test_events, rng)
        test = []
        for i, p in enumerate(points):
            d = synth_dtoa(campaign.geometry, campaign.layout, p,
                           noise_std=campaign.dtoa_noise_std, rng=rng,
                           pairs=pairs)
            test.append(AEEvent(event_id=f"test-{i:05d}", x_mm=p[0],
                                y_mm=p[1], dtoa=d))
        out = args.test_out or "test_events.csv"
        write_event_table(out, test, pairs)
        print(f"wrote {len(test)} test events to {out}")

    if args.waveform_events:
        rng = np.random.default_rng([campaign.seed, 0xAE])
        base = Path(args.waveform_dir or "waveforms")
        points = sample_test_points(campaign.geometry, args.waveform_events, rng)
        for i, p in enumerate(points):
            event_dir = base / f"event-{i:05d}"
            event_dir.mkdir(parents=True, exist_ok=True)
            for sid in campaign.layout.sensor_ids:
                w, _ = synth_waveform(campaign.geometry, campaign.layout, p,
                                      sid, args.sample_rate, rng)
                write_waveform_csv(event_dir / f"sensor_{sid}.csv", w)
            truth = event_dir / "truth.json"
            truth.write_text(json.dumps(
                {"x_mm": float(p[0]), "y_mm": float(p[1])}, sort_keys=True))
        print(f"wrote {args.waveform_events} waveform event directories "
              f"under {base}")
    return 0


def _cmd_pick(args) -> int:
    events = []
    pairs = None
    for event_dir in args.event_dirs:
        directory = Path(event_dir)
        files = sorted(directory.glob("sensor_*.csv"))
        if not files:
            raise DataFormatError("no sensor_*.csv waveform files",
                                  path=str(directory))
        onsets = {}
        for f in files:
            w = read_waveform_csv(f)
            onsets[w.sensor_id] = pick_onset(w)
        if pairs is None:
            pairs = sensor_pairs(onsets.keys())
        events.append(AEEvent(event_id=directory.name, x_mm=None, y_mm=None,
                              dtoa=dtoa_vector(onsets, pairs)))
    write_event_table(args.out, events, pairs)
    print(f"wrote {len(events)} picked events to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config_arg(args)
    if args.seed is not None:
        cfg["qpso"]["seed"] = args.seed
    pairs, events = read_event_table(args.events)
    labelled = [e for e in events if e.labelled]
    if not labelled:
        raise DataFormatError("event table has no labelled events to train on",
                              path=args.events)
    X = np.array([[e.x_mm, e.y_mm] for e in labelled])
    Y = np.array([e.dtoa for e in labelled])
    swarm = swarm_from_config(cfg, dim=2)
    bank = loc.train_model_bank(
        X, Y, pairs, swarm=swarm,
        kernel=cfg["gp"]["kernel"], distance=cfg["gp"]["distance"],
        seed=int(cfg["qpso"]["seed"]))
    loc.save_bank(args.out, bank)
    print(f"trained {bank.size} pair models on {len(labelled)} events; "
          f"bank saved to {args.out}")
    return 0


def _load_bank_and_grid(args, cfg):
    bank = loc.load_bank(args.bank)
    geom = geometry_from_config(cfg)
    grid = loc.make_predictive_grid(geom, cfg["locate"]["predictive_spacing_mm"])
    return bank, grid


def _cmd_locate(args) -> int:
    cfg = _load_config_arg(args)
    bank, grid = _load_bank_and_grid(args, cfg)
    pairs, events = read_event_table(args.events)
    if tuple(pairs) != tuple(bank.pairs):
        raise DataFormatError("event-table pair columns do not match the bank",
                              path=args.events, line=1)
    if args.event_id is not None:
        events = [e for e in events if e.event_id == args.event_id]
        if not events:
            raise DataFormatError(f"event id {args.event_id!r} not found",
                                  path=args.events)
    cache = loc.PredictiveCache(bank, grid)
    latent_only = bool(cfg["gp"]["latent_variance_only"])
    records = []
    for e in events:
        lmap = loc.build_map(bank, grid, e.dtoa, cache=cache,
                             latent_variance_only=latent_only)
        point, ll = loc.predict_location(lmap)
        records.append(loc.prediction_record(e.event_id, point, ll))
    loc.write_predictions_json(args.out, records)
    print(f"wrote {len(records)} predictions to {args.out}")
    return 0


def _cmd_map(args) -> int:
    cfg = _load_config_arg(args)
    bank, grid = _load_bank_and_grid(args, cfg)
    pairs, events = read_event_table(args.events)
    if tuple(pairs) != tuple(bank.pairs):
        raise DataFormatError("event-table pair columns do not match the bank",
                              path=args.events, line=1)
    matches = [e for e in events if e.event_id == args.event_id]
    if not matches:
        raise DataFormatError(f"event id {args.event_id!r} not found",
                              path=args.events)
    lmap = loc.build_map(bank, grid, matches[0].dtoa,
                         latent_variance_only=bool(cfg["gp"]["latent_variance_only"]))
    if args.out_csv:
        loc.write_map_csv(args.out_csv, lmap)
        print(f"wrote likelihood map CSV ({grid.count} rows) to {args.out_csv}")
    if args.out_pgm:
        loc.write_map_pgm(args.out_pgm, lmap)
        print(f"wrote likelihood raster to {args.out_pgm}")
    if not (args.out_csv or args.out_pgm):
        point, ll = loc.predict_location(lmap)
        print(json.dumps(loc.prediction_record(matches[0].event_id, point, ll),
                         sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    with open(args.predictions, encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = [payload]
    _, events = read_event_table(args.truth)
    truth_by_id = {e.event_id: e for e in events if e.labelled}
    preds, truths = [], []
    for rec in payload:
        ev = truth_by_id.get(rec["event_id"])
        if ev is None:
            raise DataFormatError(
                f"no labelled truth row for event {rec['event_id']!r}",
                path=args.truth)
        preds.append((rec["x_mm"], rec["y_mm"]))
        truths.append((ev.x_mm, ev.y_mm))
    value = rmse(preds, truths)
    print(f"rmse_mm={value:.9g} events={len(preds)}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"rmse_mm": value, "events": len(preds)}, fh,
                      sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config_arg(args)
    if args.seed is not None:
        cfg["campaign"]["seed"] = args.seed
    campaign = campaign_from_config(cfg)
    sw = cfg["sweep"]
    report = run_sweep(
        campaign,
        spacings=sw["spacings_mm"],
        methods=sw["methods"],
        test_sets=int(sw["test_sets"]),
        events_per_set=int(sw["events_per_set"]),
        predictive_spacing=float(cfg["locate"]["predictive_spacing_mm"]),
        swarm=swarm_from_config(cfg, dim=2),
        config_digest=config_hash(cfg),
        workers=int(sw["workers"]),
    )
    write_report_csv(args.out, report)
    print(f"wrote sweep report ({len(report.rows)} rows) to {args.out}")
    if args.timing_out:
        write_timing_csv(args.timing_out, report)
        print(f"wrote timings to {args.timing_out}")
    return 0


def _build_parser() -> _CliParser:
    parser = _CliParser(
        prog="loel",
        description="Acoustic-emission source localisation via per-pair "
                    "forward GP likelihood maps.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, seed=True):
        p.add_argument("--config", help="JSON config file")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("synth", help="generate synthetic campaign CSVs")
    common(p)
    p.add_argument("--out", required=True, help="training event table CSV")
    p.add_argument("--spacing", type=float, help="training grid spacing (mm)")
    p.add_argument("--test-events", type=int, default=0,
                   help="also draw this many random labelled test events")
    p.add_argument("--test-out", help="test event table CSV")
    p.add_argument("--waveform-events", type=int, default=0,
                   help="also synthesise raw waveform directories")
    p.add_argument("--waveform-dir", help="directory for waveform events")
    p.add_argument("--sample-rate", type=float, default=2e6,
                   help="waveform sample rate in Hz")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pick", help="pick onsets and build a dTOA event table")
    p.add_argument("event_dirs", nargs="+",
                   help="event directories of sensor_<id>.csv waveforms")
    p.add_argument("--out", required=True, help="output event table CSV")
    p.set_defaults(func=_cmd_pick)

    p = sub.add_parser("train", help="train the per-pair model bank")
    common(p)
    p.add_argument("--events", required=True, help="labelled event table CSV")
    p.add_argument("--out", required=True, help="output bank JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("locate", help="predict source locations for events")
    common(p, seed=False)
    p.add_argument("--bank", required=True, help="model bank JSON")
    p.add_argument("--events", required=True, help="event table CSV")
    p.add_argument("--event-id", help="only this event")
    p.add_argument("--out", required=True, help="prediction JSON")
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("map", help="export the likelihood map of one event")
    common(p, seed=False)
    p.add_argument("--bank", required=True, help="model bank JSON")
    p.add_argument("--events", required=True, help="event table CSV")
    p.add_argument("--event-id", required=True, help="event to map")
    p.add_argument("--out-csv", help="likelihood map CSV")
    p.add_argument("--out-pgm", help="8-bit PGM raster")
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("eval", help="RMSE of predictions against truth")
    p.add_argument("--predictions", required=True, help="prediction JSON")
    p.add_argument("--truth", required=True, help="labelled event table CSV")
    p.add_argument("--out", help="optional JSON result file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="grid-spacing benchmark sweep")
    common(p)
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--timing-out", help="wall-clock CSV (not reproducible)")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"loel: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (LoelError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"loel: {type(exc).__name__}: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
