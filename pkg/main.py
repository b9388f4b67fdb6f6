#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
ksym — решения −Δu = f(|x|, u) с k-симметрией на радиальных областях:
поиск, индексы Морса и проверка симметрии относительно оси.
Версия: 0.4

Команды:
    run <scenario.json>       выполнить эксперимент
    validate <scenario.json>  проверить сценарий без расчёта
    inspect <field.json>      описать сохранённое поле

Коды выхода: 0 — успех, 2 — ошибка конфигурации, 3 — численный сбой.
"""

import argparse
import sys
from pathlib import Path

# Добавляем путь к source, чтобы импорты работали
sys.path.insert(0, str(Path(__file__).parent))

from config import settings
from source.errors import ConfigError, FormatError, IoError, NumericalError, TruncatedPayload
from source.logger import logger
from source.runner import Runner
from source.scenario import Scenario
from source.storage import load_field

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def parse_args(argv=None) -> argparse.Namespace:
    """Разбор аргументов командной строки."""
    parser = argparse.ArgumentParser(prog="ksym", description="k-symmetric solutions of semilinear elliptic problems")
    parser.add_argument("--version", action="version", version=f"ksym {settings.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, default=None,
                     help=f"output directory (default: {settings.OUT_DIR}/<scenario name>)")
    run.add_argument("--workers", type=int, default=settings.WORKERS)
    run.add_argument("--seed-rng", type=int, default=None,
                     help="recorded in timings.json; named seeds never use it")

    validate = sub.add_parser("validate", help="check a scenario without computing")
    validate.add_argument("scenario", type=Path)

    inspect = sub.add_parser("inspect", help="describe a saved field")
    inspect.add_argument("field", type=Path)
    return parser.parse_args(argv)


def cmd_run(args) -> int:
    scenario = Scenario.load(args.scenario)
    out = args.out or Path(settings.OUT_DIR) / scenario.name
    if args.seed_rng is not None and not 0 <= args.seed_rng < 2 ** 64:
        raise ConfigError("--seed-rng", "must be an unsigned 64-bit integer")
    manifest = Runner(scenario, out, workers=args.workers, seed_rng=args.seed_rng).run()
    print(f"Report written: {out / 'report.json'} (runs={len(manifest.records)}, failed={len(manifest.failed)})")
    return EXIT_NUMERICAL if manifest.failed else EXIT_OK


def cmd_validate(args) -> int:
    scenario = Scenario.load(args.scenario)
    print(f"{args.scenario}: OK ({scenario.experiment.value}, hash {scenario.hash[:12]})")
    return EXIT_OK


def cmd_inspect(args) -> int:
    u = load_field(args.field)
    grid = u.grid
    print(f"{args.field}: {grid.domain.kind.value} r=[{grid.domain.r_inner:g}, {grid.domain.r_outer:g}], "
          f"N_r={grid.n_r}, N_theta={grid.n_theta}")
    print(f"  min={u.values.min():.10g} max={u.values.max():.10g} L2={grid.norm(u):.10g}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "inspect": cmd_inspect}


def main(argv=None) -> int:
    """Главная функция программы."""
    args = parse_args(argv)
    logger.info("=" * 50)
    logger.info(f"ksym {settings.VERSION}: {args.command}")
    logger.info("=" * 50)

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FormatError, TruncatedPayload) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, IoError) as e:
        logger.error(f"Failure: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
