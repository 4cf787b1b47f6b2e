"""Command line: run scripts, run benchmarks, or serve a standing database."""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from .errors import IdeaError

# feeds started by `idea exec` get this long to drain before they are stopped
EXEC_FEED_TIMEOUT = 600.0


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in str(text).split(",") if x != ""]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None
    return parse


def _host_port(text):
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="idea", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    x = sub.add_parser("exec", help="run a DDL/DML script against a fresh cluster")
    x.add_argument("script", type=Path)
    x.add_argument("--nodes", type=int, default=1)
    x.add_argument("--feed-timeout", type=float, default=EXEC_FEED_TIMEOUT,
                   help="seconds to let started file feeds drain")

    b = sub.add_parser("bench", help="run enrichment experiments and write a report")
    b.add_argument("--case", type=_csv_list(str), default=["Q1"],
                   help="Q1..Q8, Q5-noindex, safety, sensitive, highrisk or none; comma list")
    b.add_argument("--tweets", type=int, default=100_000)
    b.add_argument("--batch", type=_csv_list(int), default=[420], help="comma list")
    b.add_argument("--nodes", type=_csv_list(int), default=[4], help="comma list")
    b.add_argument("--model", type=_csv_list(str), default=["batch"],
                   help="record, batch or stream; comma list")
    b.add_argument("--update-rate", type=_csv_list(float), default=[0.0], help="comma list")
    b.add_argument("--ref-scale", type=float, default=0.01)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--intake", choices=("single", "balanced"), default="single")
    b.add_argument("--runs", type=int, default=1, help="report the median of this many runs")
    b.add_argument("--static", action="store_true", help="single long-running job baseline")
    b.add_argument("--out", type=Path, default=Path("report.csv"))
    b.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("serve", help="standing cluster accepting scripts over TCP")
    s.add_argument("--nodes", type=int, default=1)
    s.add_argument("--socket", type=_host_port, default=("127.0.0.1", 9200))
    return p


def cmd_exec(args):
    from .database import Database
    from .datamodel import print_json
    from .feeds import FeedState, SocketSource

    text = args.script.read_text(encoding="utf-8")
    db = Database(nodes=args.nodes)
    try:
        for result in db.execute(text):
            if isinstance(result, list):
                for r in result:
                    print(print_json(r))
            elif result is not None:
                print(result)
        for name, f in db.feeds.items():
            if f.machine.state is FeedState.RUNNING:
                if not isinstance(f.descriptor.adapter, SocketSource):
                    f.runtime.wait(args.feed_timeout)
                m = db.stop_feed(name, timeout=args.feed_timeout)
                print(f"feed {name}: ingested={m.ingested} stored={m.stored} "
                      f"skipped={m.skipped}", file=sys.stderr)
    finally:
        db.close()
    return 0


def cmd_bench(args):
    from .bench.report import emit_csv, emit_plot_data, render_plots
    from .bench.runner import run_experiment, run_repeated
    from .bench.workloads import WorkloadSpec

    if args.runs < 1:
        raise ValueError("--runs must be at least 1")
    if not args.out.parent.is_dir():
        raise IOError(f"cannot write {args.out}: no such directory")
    specs = [
        WorkloadSpec(case_id=c, tweet_count=args.tweets, batch_size=bs, node_count=n,
                     intake_mode=args.intake, model=m, update_rate=u,
                     reference_scale=args.ref_scale, seed=args.seed)
        for c, n, m, u, bs in itertools.product(args.case, args.nodes, args.model,
                                                args.update_rate, args.batch)]
    reports = []
    for spec in specs:
        if args.runs == 1:
            r = run_experiment(spec, static=args.static)
        else:
            r = run_repeated(spec, runs=args.runs, static=args.static)
        reports.append(r)
        print(f"{spec.case_id} nodes={spec.node_count} batch={spec.batch_size} "
              f"model={spec.model.value} updates={spec.update_rate:g}: "
              f"{r.throughput:.0f} rec/s, p50 refresh {r.p50_refresh_ms:.1f} ms",
              file=sys.stderr)
    out = args.out
    emit_csv(reports, out)
    sys.stdout.write(out.read_text(encoding="utf-8"))
    emit_plot_data(reports, out.with_suffix(".plot.json"))
    if not args.no_plots:
        for path in render_plots(reports, out.with_suffix("")):
            print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_serve(args):
    from .server import ScriptServer

    host, port = args.socket
    server = ScriptServer(host, port, nodes=args.nodes)
    h, p = server.address
    print(f"serving {args.nodes}-node cluster on {h}:{p}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"exec": cmd_exec, "bench": cmd_bench, "serve": cmd_serve}[args.command]
    try:
        return handler(args)
    except (IdeaError, OSError, ValueError, TimeoutError) as e:
        print(f"idea {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
