"""Command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 analysis singularity,
4 unsupported model, 5 simulation failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import report
from .closedloop import closed_loop_harmonics, prediction_metrics
from .config import (SystemConfig, list_cases, load_case, load_config,
                     parallel_map)
from .element import INPUT_NODES
from .errors import ConfigError, NoSteadyState, ResetFRAError, SimulationError
from .hosidf import hosidf_pp, open_loop_harmonics
from .regions import scan_region
from .sim import (reset_statistics, simulate, steady_state_window,
                  step_metrics, write_trace_csv)

__all__ = ['main', 'build_parser']


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load(args) -> SystemConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.case:
        cfg = load_case(args.case)
    else:
        raise ConfigError("one of --case or --config is required")
    return _override(cfg, args)


def _override(cfg: SystemConfig, args) -> SystemConfig:
    loop = cfg.loop
    if getattr(args, 'gamma', None) is not None:
        loop = loop.replace(gamma=args.gamma)
    if getattr(args, 'node', None):
        loop = loop.replace(input_node=args.node)
    return SystemConfig(cfg.name, loop, cfg.analysis, cfg.raw)


def _grid_hz(cfg: SystemConfig, args) -> np.ndarray:
    if getattr(args, 'freq', None):
        return np.asarray(args.freq, dtype=float)
    a = cfg.analysis
    fmin = args.fmin if args.fmin is not None else a['f_min']
    fmax = args.fmax if args.fmax is not None else a['f_max']
    points = args.points if args.points is not None else a['points']
    if not 0 < fmin < fmax or points < 2:
        raise ConfigError("frequency grid needs 0 < fmin < fmax and points >= 2")
    return np.logspace(np.log10(fmin), np.log10(fmax), points)


def _wants(args, kind: str) -> bool:
    return args.format in (kind, 'both')


def _comments(cfg: SystemConfig, command: str) -> list[str]:
    return [f'resetfra {command}', f'config={cfg.name} hash={cfg.digest}',
            f'gamma={report.format_number(cfg.loop.gamma)} '
            f'k_rc={report.format_number(cfg.loop.k_rc)} node={cfg.loop.input_node}']


def _db(z) -> float:
    z = abs(z)
    return 20 * math.log10(z) if z > 0 else -math.inf


def _unwrap_deg(values) -> np.ndarray:
    return np.degrees(np.unwrap(np.angle(np.asarray(values, dtype=complex))))


def cmd_hosidf(args) -> int:
    cfg = _load(args)
    loop = cfg.loop
    freqs = _grid_hz(cfg, args)
    orders = args.n
    if any(n < 1 for n in orders):
        raise ConfigError("harmonic orders must be positive")
    even = [n for n in orders if n % 2 == 0]
    if even:
        print(f"warning: even orders {even} are identically zero", file=sys.stderr)

    def at(f):
        w = 2 * np.pi * f
        if args.open_loop:
            nh = max(orders) | 1
            harm = open_loop_harmonics(loop, w, nh)
            return [harm[n] for n in orders]
        return [hosidf_pp(loop.controller, loop.k_rc, w, n) for n in orders]

    table = np.array(parallel_map(at, freqs), dtype=complex).reshape(len(freqs), len(orders))
    rows, series = [], []
    for j, n in enumerate(orders):
        col = table[:, j]
        ph = _unwrap_deg(col) if np.any(col != 0) else np.zeros(len(col))
        mags = [_db(z) for z in col]
        rows.extend((f, n, m, p, abs(z)) for f, m, p, z in zip(freqs, mags, ph, col))
        if n % 2:
            series.append({'freq_hz': freqs, 'mag_db': mags, 'phase_deg': ph,
                           'label': f'n={n}'})
    rows.sort(key=lambda r: (r[1], r[0]))
    out = Path(args.out)
    stem = f'{cfg.name}_{"loop" if args.open_loop else "hosidf"}'
    if _wants(args, 'csv'):
        report.write_csv(out / f'{stem}.csv',
                         ['freq_hz', 'n', 'mag_db', 'phase_deg', 'mag'],
                         rows, _comments(cfg, 'hosidf'))
    if _wants(args, 'svg') and series:
        title = f'{cfg.name}: {"open-loop harmonics" if args.open_loop else "element HOSIDF"}'
        report.write_text(out / f'{stem}.svg', report.svg_bode(series, title=title))
    print(f'wrote {stem} ({len(freqs)} frequencies, orders {orders})')
    return 0


def cmd_sensitivity(args) -> int:
    cfg = _load(args)
    loop = cfg.loop
    freqs = _grid_hz(cfg, args)
    nh = args.nh or cfg.analysis['n_h']

    def at(f):
        w = 2 * np.pi * f
        h = closed_loop_harmonics(loop, w, nh)
        df = closed_loop_harmonics(loop, w, 1)
        return h, df

    results = parallel_map(at, freqs)
    rows = []
    for f, (h, df) in zip(freqs, results):
        for n in h.sensitivity.orders():
            s = h.sensitivity[n]
            rows.append((f, n, _db(s), math.degrees(np.angle(s)), abs(s), h.gamma.gamma,
                         _db(df.sensitivity[1]) if n == 1 else -math.inf))
    out = Path(args.out)
    if _wants(args, 'csv'):
        report.write_csv(out / f'{cfg.name}_sensitivity.csv',
                         ['freq_hz', 'n', 'mag_db', 'phase_deg', 'mag', 'gamma_factor',
                          'df_mag_db'], rows, _comments(cfg, 'sensitivity'))
    if _wants(args, 'svg'):
        series = []
        for n in (1, 3, 5):
            if n > nh:
                break
            vals = [h.sensitivity[n] for h, _ in results]
            series.append({'freq_hz': freqs, 'mag_db': [_db(v) for v in vals],
                           'phase_deg': _unwrap_deg(vals), 'label': f'S_{n}'})
        series.append({'freq_hz': freqs, 'mag_db': [_db(d.sensitivity[1]) for _, d in results],
                       'phase_deg': _unwrap_deg([d.sensitivity[1] for _, d in results]),
                       'label': 'S_1 (DF)'})
        report.write_text(out / f'{cfg.name}_sensitivity.svg',
                          report.svg_bode(series, title=f'{cfg.name}: closed-loop sensitivities'))
    print(f'wrote {cfg.name}_sensitivity ({len(freqs)} frequencies, n_h={nh})')
    return 0


def cmd_regions(args) -> int:
    cfg = _load(args)
    a = cfg.analysis
    fmin = args.fmin if args.fmin is not None else a['f_min']
    fmax = args.fmax if args.fmax is not None else a['f_max']
    points = args.points if args.points is not None else max(a['points'], 1000)
    res = scan_region(cfg.loop, fmin, fmax, points, node=cfg.loop.input_node)
    out = Path(args.out)
    rule = 'multiple resets where indicator ' + ('> 0' if res.multiple_when == 'positive' else '< 0')
    if _wants(args, 'csv'):
        report.write_csv(out / f'{cfg.name}_regions_{res.input_node}.csv',
                         ['freq_hz', 'indicator'], zip(res.freqs_hz, res.indicator),
                         _comments(cfg, 'regions') + [rule, f'dispatch={res.dispatch}'])
    if _wants(args, 'svg'):
        series = [{'x': res.freqs_hz, 'y': res.indicator, 'label': 'indicator'},
                  {'x': res.freqs_hz, 'y': np.zeros_like(res.freqs_hz), 'label': 'zero',
                   'dash': True}]
        report.write_text(out / f'{cfg.name}_regions_{res.input_node}.svg',
                          report.svg_lines(series, title=f'{cfg.name}: reset-region indicator',
                                           xlabel='frequency [Hz]', ylabel='indicator',
                                           logx=True))
    for w in res.warnings:
        print(f'warning: {w}', file=sys.stderr)
    print(rule)
    if res.boundary_hz is None:
        print('boundary=none')
    else:
        print(f'boundary_hz={res.boundary_hz:.6g}')
    return 0


def _sim_trace(cfg: SystemConfig, args, freq: float):
    a = cfg.analysis
    return simulate(cfg.loop, freq, dt=args.dt or a['dt'],
                    periods=args.cycles or a['periods'])


def cmd_simulate(args) -> int:
    cfg = _load(args)
    freqs = args.freq or cfg.analysis['freqs_hz']
    if not freqs:
        raise ConfigError("simulate needs --freq")
    freq = freqs[0]
    tr = _sim_trace(cfg, args, freq)
    out = Path(args.out)
    stem = f'{cfg.name}_sim_{freq:g}Hz'
    try:
        win = steady_state_window(tr, position='last')
    except NoSteadyState as exc:
        print(f'warning: {exc}', file=sys.stderr)
        win = None
    if _wants(args, 'csv'):
        write_trace_csv(tr, out / f'{stem}.csv',
                        header_comment=f'config={cfg.name} hash={cfg.digest} freq_hz={freq!r}')
    if _wants(args, 'svg'):
        n_show = 3 * tr.settings['samples_per_period']
        sl = slice(max(len(tr.t) - n_show - 1, 0), None)
        shown = tr.reset_instants[tr.reset_instants >= tr.t[sl][0]]
        report.write_text(out / f'{stem}.svg',
                          report.svg_time(tr.t[sl], {'r': tr.r[sl], 'e': tr.e[sl]}, shown,
                                          title=f'{cfg.name} at {freq:g} Hz'))
    print(f'resets={len(tr.reset_instants)} coalesced={len(tr.coalesced)} dt={tr.dt:.6g}')
    if win is not None:
        st = reset_statistics(tr, win)
        print(f'steady_state_start={tr.t[win.start]:.6g} '
              f'resets_per_period={float(st.resets_per_period):g} '
              f'two_reset_ok={str(st.resets_per_period == 2).lower()}')
    return 0


def _resolve_compare(base: SystemConfig, names: list[str]) -> list[SystemConfig]:
    cases = set(list_cases())
    prefix = base.name.rsplit('-', 1)[0] + '-' if '-' in base.name else ''
    picked = []
    for name in names:
        if name in cases:
            picked.append(load_case(name))
        elif prefix + name in cases:
            picked.append(load_case(prefix + name))
        else:
            raise ConfigError(f"cannot resolve comparison target {name!r}")
    return picked


def cmd_step(args) -> int:
    cfg = _load(args)
    configs = [cfg]
    if args.compare:
        configs = [_override(c, args) for c in _resolve_compare(cfg, args.compare)]
    out = Path(args.out)

    def run(c):
        a = c.analysis
        dt = args.dt or a['dt'] or 1e-6
        duration = args.duration or a['duration'] or 2000 * dt
        tr = simulate(c.loop, input_kind='step', dt=dt, duration=duration)
        return tr, step_metrics(tr)

    results = parallel_map(run, configs)
    rows = []
    for c, (tr, m) in zip(configs, results):
        rows.append((c.name, m.overshoot, m.settling_time, m.final_value, len(tr.reset_instants)))
        print(f'{c.name}: overshoot_pct={m.overshoot:.4f} settling_time={m.settling_time:.6g} '
              f'final_value={m.final_value:.6g} resets={len(tr.reset_instants)}')
        if _wants(args, 'csv'):
            write_trace_csv(tr, out / f'{c.name}_step.csv',
                            header_comment=f'config={c.name} hash={c.digest} input=step')
    if _wants(args, 'csv'):
        report.write_csv(out / f'{cfg.name}_step_metrics.csv',
                         ['config', 'overshoot_pct', 'settling_time', 'final_value', 'resets'],
                         rows, _comments(cfg, 'step'))
    if _wants(args, 'svg'):
        series = [{'x': tr.t, 'y': tr.y, 'label': c.name} for c, (tr, _) in zip(configs, results)]
        tr0 = results[0][0]
        series.append({'x': tr0.t, 'y': tr0.r, 'label': 'r', 'dash': True})
        report.write_text(out / f'{cfg.name}_step.svg',
                          report.svg_lines(series, title='step responses',
                                           xlabel='time [s]', ylabel='y'))
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    freqs = args.freq or cfg.analysis['freqs_hz']
    if not freqs:
        raise ConfigError("compare needs --freq or analysis.freqs_hz")
    nh = args.nh or cfg.analysis['n_h']
    loop = cfg.loop

    def row(f):
        try:
            tr = _sim_trace(cfg, args, f)
            win = steady_state_window(tr, position='last')
            rep = prediction_metrics(loop, tr, win, n_h=nh)
        except (NoSteadyState, SimulationError) as exc:
            return f, 'NOSTEADY', str(exc)
        return f, 'OK', rep

    header = ['freq_hz', 'status', 'rms_sim', 'rms_hosidf', 'rms_df', 'linf_sim',
              'linf_hosidf', 'linf_df', 'u_rms_sim', 'u_rms_hosidf', 'u_rms_df',
              'pe_hosidf', 'pe_df', 'pa', 'resets_per_period', 'two_reset_ok']
    rows = []
    for f, status, rep in parallel_map(row, freqs):
        if status != 'OK':
            rows.append([f, status] + ['nan'] * (len(header) - 2))
            print(f'{f:g} Hz: NOSTEADY ({rep})')
            continue
        e, m = rep.sim_norms['e'], rep.model_norms
        u_model = [m[('u', k)].rms if ('u', k) in m else float('nan') for k in ('hosidf', 'df')]
        rows.append([f, status, e.rms, m[('e', 'hosidf')].rms, m[('e', 'df')].rms,
                     e.linf, m[('e', 'hosidf')].linf, m[('e', 'df')].linf,
                     rep.sim_norms['u'].rms, *u_model,
                     rep.pe[('e', 'hosidf', 'rms')], rep.pe[('e', 'df', 'rms')],
                     rep.pa[('e', 'rms')], rep.resets_per_period, rep.reliable])
        flag = '' if rep.reliable else ' (predictions unreliable: not two resets per period)'
        print(f'{f:g} Hz: rms_sim={e.rms:.6g} pe_hosidf={rep.pe[("e", "hosidf", "rms")]:.3g} '
              f'pe_df={rep.pe[("e", "df", "rms")]:.3g} '
              f'two_reset_ok={str(rep.reliable).lower()}{flag}')
    if _wants(args, 'csv'):
        report.write_csv(Path(args.out) / f'{cfg.name}_compare.csv', header, rows,
                         _comments(cfg, 'compare') + [f'n_h={nh}'])
    return 0


def cmd_validate(args) -> int:
    paths = args.paths or ([args.config] if args.config else [])
    if not paths and not args.case:
        raise ConfigError("validate-config needs a path, --config or --case")
    for p in paths:
        cfg = load_config(p)
        print(f'{p}: ok ({cfg.name}, hash={cfg.digest})')
    if args.case:
        cfg = load_case(args.case)
        print(f'{args.case}: ok (hash={cfg.digest})')
    return 0


def cmd_list(args) -> int:
    for name in list_cases():
        cfg = load_case(name)
        print(f"{name}\t{cfg.raw.get('description', '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='resetfra',
        description='Frequency-response analysis and simulation of reset control systems.')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p, grid=False, sim=False):
        src = p.add_mutually_exclusive_group()
        src.add_argument('--case', help='bundled preset name (see list-cases)')
        src.add_argument('--config', help='path to a JSON configuration')
        p.add_argument('--out', default='.', help='output directory (default: .)')
        p.add_argument('--format', choices=('csv', 'svg', 'both'), default='both')
        p.add_argument('--gamma', type=float, help='override the reset value')
        p.add_argument('--node', choices=INPUT_NODES, help='override the input node')
        p.add_argument('--freq', type=_floats, help='frequencies in Hz, comma separated')
        if grid:
            p.add_argument('--fmin', type=float)
            p.add_argument('--fmax', type=float)
            p.add_argument('--points', type=int)
        if sim:
            p.add_argument('--dt', type=float, help='integration step in seconds')
            p.add_argument('--cycles', type=int, help='number of input periods to simulate')

    p = sub.add_parser('hosidf', help='element HOSIDF or open-loop harmonics')
    common(p, grid=True)
    p.add_argument('--n', type=_ints, default=[1, 3], help='harmonic orders (default 1,3)')
    p.add_argument('--open-loop', action='store_true',
                   help='report L_n including C2 and the plant')
    p.set_defaults(func=cmd_hosidf)

    p = sub.add_parser('sensitivity', help='closed-loop harmonic sensitivities')
    common(p, grid=True)
    p.add_argument('--nh', type=int, help='harmonic truncation (odd)')
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser('regions', help='multiple-reset region indicator and boundary')
    common(p, grid=True)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser('simulate', help='sinusoidal closed-loop simulation')
    common(p, sim=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('step', help='step-response simulation and metrics')
    common(p, sim=True)
    p.add_argument('--duration', type=float, help='simulated time in seconds')
    p.add_argument('--compare', type=lambda s: [v for v in s.split(',') if v],
                   help='other presets to overlay, e.g. c1,c2,c3')
    p.set_defaults(func=cmd_step)

    p = sub.add_parser('compare', help='HOSIDF and DF predictions against simulation')
    common(p, sim=True)
    p.add_argument('--nh', type=int, help='harmonic truncation (odd)')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('validate-config', help='schema-check configurations')
    p.add_argument('paths', nargs='*')
    p.add_argument('--config')
    p.add_argument('--case')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('list-cases', help='list bundled presets')
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResetFRAError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return exc.exit_code
    except argparse.ArgumentTypeError as exc:
        print(f'error: {exc}', file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
