"""Command-line pipeline: validate, train, predict, evaluate, reproduce."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import yaml

from . import ann, data, evaluation, predictor
from . import fixtures

log = logging.getLogger("annforecast")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    stock_code: str = ""
    data_path: Path | None = None
    train_cutoff: date = date(2015, 12, 31)
    topology: tuple[int, ...] = (5, 21, 21, 1)
    hidden_activation: str = "sigmoid"
    output_activation: str = "identity"
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 1000
    init_seed: int = 42
    shuffle_seed: int = 0
    init_range: float = 0.5
    scale_lo: float = 0.1
    scale_hi: float = 0.9
    generated_on: date = date(2016, 9, 12)
    preroll: int = 8
    start_date: date = date(2016, 9, 21)
    horizon: int = 10
    # None: calendar comes from the data file only
    future_holidays: list[date] | None = None
    out_dir: Path = Path("out")

    def __post_init__(self):
        self.topology = tuple(int(n) for n in self.topology)
        if self.data_path is not None:
            self.data_path = Path(self.data_path)
        self.out_dir = Path(self.out_dir)
        for name in ("train_cutoff", "generated_on", "start_date"):
            value = getattr(self, name)
            if isinstance(value, str):
                setattr(self, name, date.fromisoformat(value))
        if self.future_holidays is not None:
            self.future_holidays = [
                d if isinstance(d, date) else date.fromisoformat(str(d)) for d in self.future_holidays
            ]
        try:
            self.train_config()
            ann.Topology(self.topology)
            data.Scaler(0.0, 1.0, self.scale_lo, self.scale_hi)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.horizon < 0 or self.preroll < 0:
            raise ConfigError("horizon and preroll must be non-negative")

    def train_config(self) -> ann.TrainConfig:
        return ann.TrainConfig(self.learning_rate, self.momentum, self.epochs,
                               self.shuffle_seed, self.init_seed, self.init_range)

    @property
    def stock_dir(self) -> Path:
        return self.out_dir / self.stock_code

    @property
    def model_path(self) -> Path:
        return self.stock_dir / "model.json"

    @property
    def ledger_path(self) -> Path:
        return self.stock_dir / "ledger.csv"

    def require_data(self) -> Path:
        if self.data_path is None:
            raise ConfigError("data_path is not set")
        if not self.data_path.exists():
            raise FileNotFoundError(f"no such file: {self.data_path}")
        return self.data_path


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path | None = None, overrides=(), out: str | None = None) -> RunConfig:
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")
        values = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        for key in ("data_path", "out_dir"):
            if values.get(key) is not None and not Path(values[key]).is_absolute():
                values[key] = path.parent / values[key]
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        values[key.strip()] = yaml.safe_load(raw)
    unknown = set(values) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if out is not None:
        values["out_dir"] = out
    if "stock_code" in values:
        values["stock_code"] = str(values["stock_code"])
    cfg = RunConfig(**values)
    if cfg.data_path is not None and not cfg.data_path.exists():
        raise FileNotFoundError(f"no such file: {cfg.data_path}")
    if cfg.data_path is not None and not cfg.stock_code:
        cfg.stock_code = cfg.data_path.stem
    return cfg


# ------------------------------------------------------------------ commands

def cmd_validate(data_path: Path) -> str:
    path = Path(data_path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    series = data.read_series(path)
    return (f"bars: {len(series)}, range {series.bars[0].date}…{series.bars[-1].date}, "
            f"skipped: {series.skipped}")


def cmd_train(cfg: RunConfig) -> Path:
    series = data.read_series(cfg.require_data(), cfg.stock_code)
    train_part, _ = data.chronological_split(series, cfg.train_cutoff)
    scaler = data.fit_scaler(train_part, cfg.scale_lo, cfg.scale_hi)
    topology = ann.Topology(cfg.topology)
    samples = data.make_windows(train_part, scaler, topology.n_inputs)
    tcfg = cfg.train_config()
    net = ann.init_network(topology, tcfg.init_seed, tcfg.init_range,
                           cfg.hidden_activation, cfg.output_activation)
    log.info("%s: training %s on %d samples for %d epochs", cfg.stock_code, topology,
             len(samples), tcfg.epochs)
    trained, trace = ann.train(net, samples, tcfg)

    cfg.stock_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "stock_code": cfg.stock_code,
        "train_cutoff": cfg.train_cutoff.isoformat(),
        "train_samples": len(samples),
        "scaler": dataclasses.asdict(scaler),
        "train_config": dataclasses.asdict(tcfg),
    }
    cfg.model_path.write_text(ann.dumps_network(trained, meta), encoding="utf-8")
    lines = ["epoch,mse"] + [f"{i + 1},{v!r}" for i, v in enumerate(trace.tolist())]
    (cfg.stock_dir / "loss.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return cfg.model_path


def load_model(path: Path) -> tuple[ann.Network, data.Scaler]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    net, meta = ann.loads_network(path.read_text(encoding="utf-8"))
    if "scaler" not in meta:
        raise ConfigError(f"{path}: model carries no training scaler")
    return net, data.Scaler(**meta["scaler"])


def cmd_predict(cfg: RunConfig, model_path: Path | None = None) -> Path:
    net, scaler = load_model(model_path or cfg.model_path)
    series = data.read_series(cfg.require_data(), cfg.stock_code)
    width = net.topology.n_inputs
    known = [b.close for b in series.bars if b.date < cfg.generated_on]
    if len(known) < width:
        raise ConfigError(f"need {width} closes before {cfg.generated_on}, found {len(known)}")

    cal = data.TradingCalendar.from_series(series, start=cfg.start_date)
    if cfg.future_holidays is not None and len(cal) < cfg.horizon:
        cal = cal.extended(cfg.horizon - len(cal), cfg.future_holidays,
                           after=max(series.bars[-1].date, cfg.start_date - timedelta(days=1)))
    rcfg = predictor.RolloutConfig(tuple(known[-width:]), cfg.start_date, cfg.horizon, cfg.preroll)
    ledger = predictor.rollout(net, scaler, rcfg, cal, cfg.stock_code, cfg.generated_on)

    cfg.stock_dir.mkdir(parents=True, exist_ok=True)
    cfg.ledger_path.write_text(predictor.ledger_to_csv(ledger), encoding="utf-8")
    return cfg.ledger_path


def cmd_evaluate(ledger_path: Path, data_path: Path, out_dir: Path) -> evaluation.EvalReport:
    for p in (ledger_path, data_path):
        if not Path(p).exists():
            raise FileNotFoundError(f"no such file: {p}")
    ledger = predictor.ledger_from_csv(Path(ledger_path).read_text(encoding="utf-8"))
    actual = data.read_series(data_path, ledger.stock_code or None)
    report = evaluation.build_report(ledger, actual)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(evaluation.render_text(report), encoding="utf-8")
    (out_dir / "report.csv").write_text(evaluation.report_to_csv(report), encoding="utf-8")
    (out_dir / "plot.csv").write_text(evaluation.plot_data_csv(report), encoding="utf-8")
    (out_dir / "summary.json").write_text(evaluation.summary_json(report), encoding="utf-8")
    return report


def _summary_lines(report: evaluation.EvalReport) -> list[str]:
    s = report.summary()
    lines = [f"MAPE: {s['mape_pct']:.2f}%"]
    if s["swing_checked"]:
        lines.append(f"swing: {s['swing_compliant']}/{s['swing_checked']} within "
                     f"{s['swing_limit_pct']:g}% (max {s['swing_max_pct']:.2f}%)")
    if s["trend_agreement"] is not None:
        lines.append(f"trend agreement: {s['trend_agreement']:.3f}")
    if s["fixed_point"]:
        price = dict(report.ledger.entries)[report.fixed_point]
        lines.append(f"fixed point: {price:.2f} from {s['fixed_point']}")
    return lines


def _reproduce_one(cfg: RunConfig) -> dict:
    cmd_train(cfg)
    cmd_predict(cfg)
    model_report = cmd_evaluate(cfg.ledger_path, cfg.data_path, cfg.stock_dir)
    published_dir = cfg.stock_dir / "published"
    published_dir.mkdir(parents=True, exist_ok=True)
    (published_dir / "ledger.csv").write_text(
        predictor.ledger_to_csv(fixtures.published_ledger(cfg.stock_code)), encoding="utf-8")
    published = cmd_evaluate(published_dir / "ledger.csv",
                             fixtures.fixture_path(f"{cfg.stock_code}_actual.csv"), published_dir)
    return {
        "stock_code": cfg.stock_code,
        "model_mape_pct": model_report.mape_pct,
        "model_trend": model_report.trend_agreement,
        "published_mape_pct": published.mape_pct,
        "published_trend": published.trend_agreement,
    }


def cmd_reproduce(base: RunConfig, jobs: int = 1) -> list[dict]:
    configs = [
        dataclasses.replace(base, stock_code=code, data_path=fixtures.fixture_path(f"{code}.csv"))
        for code in fixtures.STOCKS
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_reproduce_one, configs))
    else:
        results = [_reproduce_one(c) for c in configs]
    base.out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["stock_code,model_mape_pct,model_trend,published_mape_pct,published_trend"]
    for r in results:
        lines.append(f"{r['stock_code']},{r['model_mape_pct']:.2f},{r['model_trend']:.3f},"
                     f"{r['published_mape_pct']:.2f},{r['published_trend']:.3f}")
    (base.out_dir / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return results


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="annforecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a historical price file")
    p.add_argument("data_path", nargs="?")
    sub.add_parser("train", parents=[common], help="train a network for one stock")
    p = sub.add_parser("predict", parents=[common], help="roll a trained network forward")
    p.add_argument("--model", help="model file (default <out>/<stock>/model.json)")
    p = sub.add_parser("evaluate", parents=[common], help="compare a ledger with actual trades")
    p.add_argument("ledger_path", nargs="?")
    p.add_argument("data_path", nargs="?")
    p = sub.add_parser("reproduce", parents=[common], help="full pipeline over the bundled stocks")
    p.add_argument("--jobs", type=int, default=1, help="stocks processed in parallel")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)

    def say(text: str):
        if not args.quiet:
            print(text)

    try:
        if args.command == "validate":
            path = args.data_path
            if path is None:
                path = load_config(args.config, args.set).require_data()
            print(cmd_validate(Path(path)))
        elif args.command == "train":
            cfg = load_config(args.config, args.set, args.out)
            say(f"model written to {cmd_train(cfg)}")
        elif args.command == "predict":
            cfg = load_config(args.config, args.set, args.out)
            path = cmd_predict(cfg, Path(args.model) if args.model else None)
            say(f"ledger written to {path}")
        elif args.command == "evaluate":
            if args.ledger_path and args.data_path:
                ledger_path, data_path = Path(args.ledger_path), Path(args.data_path)
                out_dir = Path(args.out) if args.out else ledger_path.parent
            else:
                cfg = load_config(args.config, args.set, args.out)
                ledger_path, data_path, out_dir = cfg.ledger_path, cfg.require_data(), cfg.stock_dir
            report = cmd_evaluate(ledger_path, data_path, out_dir)
            for line in _summary_lines(report):
                print(line)
        elif args.command == "reproduce":
            cfg = load_config(args.config, args.set, args.out)
            for r in cmd_reproduce(cfg, args.jobs):
                say(f"{r['stock_code']}: model MAPE {r['model_mape_pct']:.2f}%  "
                    f"published MAPE {r['published_mape_pct']:.2f}%")
    except (FileNotFoundError, ConfigError, data.DataError, evaluation.EvalError,
            predictor.RolloutError, ann.TrainingError, ValueError, yaml.YAMLError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
