"""Command-line interface wiring the pipeline phases into one binary.

Standard output carries data; progress and the resolved job spec go to
standard error. Exit codes: 0 success, 1 data/runtime error, 2 usage error.
Every run can be replayed from a job file: ``mbrkit --job run.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import ExitStack
from typing import IO, Sequence

from . import core, corpusprep, distill, evaluation, mbr, metrics, qe, sampling
from .core import DataError, MbrkitError

JOB_SCHEMA = 1


class UsageError(MbrkitError):
    """Bad flag combinations; reported with exit code 2."""


def _open_in(path: str, stack: ExitStack) -> IO[str]:
    if path == "-":
        return sys.stdin
    return stack.enter_context(open(path, encoding="utf-8"))


def _open_out(path: str | None, stack: ExitStack) -> IO[str]:
    if path is None or path == "-":
        return sys.stdout
    return stack.enter_context(open(path, "w", encoding="utf-8"))


def _resolve_workers(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise UsageError("--workers must be >= 1")
        return value
    return os.cpu_count() or 1


def _provider_from_arg(name: str, max_len: int | None) -> sampling.BigramProvider:
    if name == "toy":
        return sampling.default_toy_provider(max_len=max_len or 24)
    provider = sampling.BigramProvider.from_file(name)
    if max_len:
        provider.max_len = max_len
    return provider


def _utility_from_arg(name: str) -> metrics.Utility:
    if name == "external":
        endpoint = os.environ.get("MBRKIT_SCORER")
        if not endpoint:
            raise UsageError(
                "--utility external needs the MBRKIT_SCORER environment variable"
            )
        name = f"external:{endpoint}"
    return metrics.resolve_utility(name)


def _read_outputs_file(path: str, stack: ExitStack) -> dict[str, str]:
    """JSONL of {"seg_id": ..., "text": ...} records."""
    outputs: dict[str, str] = {}
    stream = _open_in(path, stack)
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            seg_id, text = obj["seg_id"], obj["text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        if seg_id in outputs:
            raise DataError(f"{path}:{line_no}: duplicate seg_id {seg_id!r}")
        outputs[seg_id] = text
    return outputs


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = sampling.SamplingConfig(
        seed=args.seed,
        epsilon=args.epsilon,
        num_samples=args.num_samples,
        max_len=args.max_len,
    )
    provider = _provider_from_arg(args.provider, args.max_len)
    workers = _resolve_workers(args.workers)
    with ExitStack() as stack:
        segments = list(core.read_segments(_open_in(args.sources, stack)))
        # Per-sample seeds derive from (seed, seg_id, sample_index), so
        # parallel and serial runs emit identical files.
        if workers > 1 and len(segments) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                sets = list(
                    pool.map(lambda seg: sampling.sample_candidates(provider, seg, cfg), segments)
                )
        else:
            sets = [sampling.sample_candidates(provider, seg, cfg) for seg in segments]
        out = _open_out(args.out, stack)
        count = core.write_candidates(sets, out)
    print(f"sampled {count} segments x {cfg.num_samples} candidates", file=sys.stderr)
    return 0


def _decide_one(
    cs: core.CandidateSet,
    args: argparse.Namespace,
    utility: metrics.Utility | None,
    provider: sampling.BigramProvider | None,
    workers: int,
) -> tuple[dict | None, core.DistillExample | None, mbr.UtilityMatrix | None]:
    """Returns (selection-shaped record, dataset record, matrix dump)."""
    method = args.method
    kwargs = {"workers": workers}
    if args.batch_size:
        kwargs["batch_size"] = args.batch_size
    matrix = None
    if method in ("mbr", "qe"):
        if args.top_k:
            if method == "mbr":
                ranking = mbr.mbr_rerank_topk(
                    cs, utility, args.top_k, args.include_self, **kwargs
                )
            else:
                ranking = qe.qe_rerank_topk(cs, utility, args.top_k, **kwargs)
            record = {
                "seg_id": cs.segment.seg_id,
                "method": method,
                "k": args.top_k,
                "ranking": [[i, core.quantize_score(s)] for i, s in ranking],
            }
            chosen_idx, chosen_score = ranking[0]
        else:
            if method == "mbr":
                if args.dump_matrix:
                    matrix = mbr.utility_matrix(cs, utility, args.include_self, **kwargs)
                selection = mbr.mbr_select(cs, utility, args.include_self, **kwargs)
            else:
                selection = qe.qe_select(cs, utility, **kwargs)
            record = core.selection_to_obj(selection)
            chosen_idx, chosen_score = selection.chosen, selection.ranking[0][1]
        by_index = {cand.sample_index: cand for cand in cs.candidates}
        example = core.DistillExample(
            seg_id=cs.segment.seg_id,
            source=cs.segment.source,
            target=by_index[chosen_idx].text,
            method=method,
            score=chosen_score,
            teacher_id=args.teacher_id,
        )
        return record, example, matrix
    if method == "sample":
        cand = cs.candidates[0]
        score = None
    elif method == "beam":
        beam_cfg = sampling.BeamConfig(
            beam_size=args.beam_size, alpha=args.alpha, max_len=args.max_len
        )
        cand = sampling.beam_decode(provider, cs.segment, beam_cfg)
        score = sampling.penalized_score(cand, beam_cfg.alpha, provider.token_separator)
    else:
        cand = sampling.greedy_decode(provider, cs.segment, args.max_len)
        score = None
    example = core.DistillExample(
        seg_id=cs.segment.seg_id,
        source=cs.segment.source,
        target=cand.text,
        method=method,
        score=score,
        teacher_id=args.teacher_id,
    )
    return None, example, None


def cmd_decide(args: argparse.Namespace) -> int:
    workers = _resolve_workers(args.workers)
    utility = None
    if args.method in ("mbr", "qe"):
        if not args.utility:
            raise UsageError(f"--method {args.method} requires --utility")
        utility = _utility_from_arg(args.utility)
        wanted = core.REFERENCE_BASED if args.method == "mbr" else core.REFERENCE_FREE
        if utility.kind != wanted:
            raise UsageError(
                f"--method {args.method} requires a {wanted} utility; "
                f"{utility.name!r} is {utility.kind}"
            )
    elif args.emit == "selections":
        raise UsageError(
            f"--emit selections is only defined for mbr/qe, not {args.method!r}"
        )
    provider = None
    if args.method in ("beam", "greedy"):
        provider = _provider_from_arg(args.provider, args.max_len)
    if args.dump_matrix and args.method != "mbr":
        raise UsageError("--dump-matrix is only defined for --method mbr")
    with ExitStack() as stack:
        candidate_sets = list(core.read_candidates(_open_in(args.candidates, stack)))
        out = _open_out(args.out, stack)
        matrix_out = (
            stack.enter_context(open(args.dump_matrix, "w", encoding="utf-8"))
            if args.dump_matrix
            else None
        )
        for cs in candidate_sets:
            record, example, matrix = _decide_one(cs, args, utility, provider, workers)
            if matrix_out is not None and matrix is not None:
                matrix_out.write(
                    json.dumps(matrix.to_obj(), ensure_ascii=False) + "\n"
                )
            if args.emit == "dataset":
                out.write(core.encode_distill_example(example) + "\n")
            else:
                out.write(json.dumps(record, ensure_ascii=False) + "\n")
    return 0


def cmd_distill(args: argparse.Namespace) -> int:
    workers = _resolve_workers(args.workers)
    candidate_source = "file" if args.candidates else "generate"
    needs_sampling = candidate_source == "generate" and args.method in ("mbr", "qe", "sample")
    sampling_cfg = None
    if needs_sampling:
        if args.seed is None:
            raise UsageError("sampling requires --seed (no wall-clock seeding)")
        sampling_cfg = sampling.SamplingConfig(
            seed=args.seed,
            epsilon=args.epsilon,
            num_samples=args.num_samples,
            max_len=args.max_len,
        )
    cfg = distill.DistillJobConfig(
        method=args.method,
        teacher_id=args.teacher_id,
        utility=args.utility,
        sampling=sampling_cfg,
        beam=sampling.BeamConfig(
            beam_size=args.beam_size, alpha=args.alpha, max_len=args.max_len
        ),
        candidate_source=candidate_source,
        include_self=args.include_self,
        skip_failed=args.skip_failed,
    )
    utility = None
    if args.method in ("mbr", "qe"):
        utility = _utility_from_arg(args.utility)
        wanted = core.REFERENCE_BASED if args.method == "mbr" else core.REFERENCE_FREE
        if utility.kind != wanted:
            raise UsageError(
                f"--method {args.method} requires a {wanted} utility; "
                f"{utility.name!r} is {utility.kind}"
            )
    provider = None
    if args.method in ("beam", "greedy") or candidate_source == "generate":
        provider = _provider_from_arg(args.provider, args.max_len)
    with ExitStack() as stack:
        candidates = None
        if args.candidates:
            candidates = {
                cs.segment.seg_id: cs
                for cs in core.read_candidates(_open_in(args.candidates, stack))
            }
        if args.sources:
            segments = list(core.read_segments(_open_in(args.sources, stack)))
        elif candidates is not None:
            segments = [cs.segment for cs in candidates.values()]
        else:
            raise UsageError("distill needs --sources or --candidates")
        run_kwargs = dict(
            candidates=candidates,
            provider=provider,
            utility=utility,
            workers=workers,
            batch_size=args.batch_size,
        )
        if args.parent_manifest:
            with open(args.parent_manifest, encoding="utf-8") as handle:
                parent = distill.read_manifest(handle)
            examples, manifest = distill.iterate_round(parent, segments, cfg, **run_kwargs)
        else:
            examples, manifest = distill.generate_dataset(segments, cfg, **run_kwargs)
        out = _open_out(args.out, stack)
        count = core.write_distill_dataset(examples, out)
        with open(args.manifest, "w", encoding="utf-8") as handle:
            distill.write_manifest(manifest, handle)
    print(f"distilled {count} records ({len(manifest.skipped_seg_ids)} skipped)", file=sys.stderr)
    return 0


def cmd_mix(args: argparse.Namespace) -> int:
    datasets = []
    with ExitStack() as stack:
        for path in args.inputs:
            datasets.append(list(core.read_distill_dataset(_open_in(path, stack))))
        mixed = distill.mix_datasets(datasets, args.policy)
        out = _open_out(args.out, stack)
        core.write_distill_dataset(mixed, out)
    return 0


def cmd_filter(args: argparse.Namespace) -> int:
    cfg = corpusprep.FilterConfig(
        max_source_tokens=args.max_src_tokens,
        max_length_ratio=args.max_ratio,
        dedup=args.dedup,
        symmetric_ratio=not args.strict_ratio,
    )
    with ExitStack() as stack:
        if args.tsv:
            pairs = []
            for line_no, line in enumerate(_open_in(args.tsv, stack), start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if "\t" not in line:
                    raise DataError(f"{args.tsv}:{line_no}: expected source\\ttarget")
                source, _, target = line.partition("\t")
                pairs.append((source, target))
        elif args.src and args.tgt:
            src_lines = _open_in(args.src, stack).read().splitlines()
            tgt_lines = _open_in(args.tgt, stack).read().splitlines()
            if len(src_lines) != len(tgt_lines):
                raise DataError(
                    f"source and target files differ in length: "
                    f"{len(src_lines)} vs {len(tgt_lines)}"
                )
            pairs = list(zip(src_lines, tgt_lines))
        else:
            raise UsageError("filter needs --tsv or both --src and --tgt")
        if args.classifier:
            with corpusprep.CommandClassifier(args.classifier) as keep_fn:
                kept, report = corpusprep.filter_pairs(pairs, cfg, keep_fn=keep_fn)
        else:
            kept, report = corpusprep.filter_pairs(pairs, cfg)
        out = _open_out(args.out, stack)
        for source, target in kept:
            out.write(f"{source}\t{target}\n")
    report_json = json.dumps(report.to_obj(), ensure_ascii=False)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as handle:
            handle.write(report_json + "\n")
    else:
        print(report_json, file=sys.stderr)
    return 0


def _hist_values(path: str, which: str, stack: ExitStack) -> list[float]:
    values: list[float] = []
    for line_no, line in enumerate(_open_in(path, stack), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        if isinstance(obj, (int, float)):
            values.append(float(obj))
        elif isinstance(obj, dict) and "ranking" in obj:
            ranking = obj["ranking"]
            picked = ranking[:1] if which == "top1" else ranking
            values.extend(float(score) for _, score in picked)
        elif isinstance(obj, dict) and "values" in obj:
            for row in obj["values"]:
                values.extend(float(v) for v in row if v is not None)
        else:
            raise DataError(f"{path}:{line_no}: no scores in record")
    return values


def cmd_evaluate(args: argparse.Namespace) -> int:
    with ExitStack() as stack:
        if args.mqm:
            annotations = list(evaluation.read_mqm_annotations(_open_in(args.mqm, stack)))
            table = evaluation.mqm_report(annotations)
            obj = {"mqm": {k: core.quantize_score(v) for k, v in table.items()}}
            out = _open_out(args.out, stack)
            out.write(json.dumps(obj, ensure_ascii=False) + "\n")
            width = max([len("system")] + [len(k) for k in table])
            print(f"{'system'.ljust(width)}  mqm_score", file=sys.stderr)
            for system, score in table.items():
                print(f"{system.ljust(width)}  {score:9.3f}", file=sys.stderr)
            return 0
        if args.scores:
            if not args.histogram_out:
                raise UsageError("--scores needs --histogram-out")
            values = _hist_values(args.scores, args.scores_from, stack)
            rows = evaluation.histogram(values, bins=args.bins)
            with open(args.histogram_out, "w", encoding="utf-8") as handle:
                handle.write(evaluation.histogram_csv(rows))
            return 0
        if not args.outputs or not args.refs:
            raise UsageError("evaluate needs --mqm, --scores, or --outputs with --refs")
        systems = {}
        for item in args.outputs:
            name, _, path = item.partition("=")
            if not path:
                raise UsageError(f"--outputs expects name=path, got {item!r}")
            systems[name] = _read_outputs_file(path, stack)
        references = _read_outputs_file(args.refs, stack)
        sources = _read_outputs_file(args.sources, stack) if args.sources else None
        metric_names = _split_metric_names(args.metrics)
        report = evaluation.score_report(systems, references, metric_names, sources)
        out = _open_out(args.out, stack)
        out.write(json.dumps(report.to_obj(), ensure_ascii=False) + "\n")
        print(report.to_table(), file=sys.stderr)
        return 0 if not report.errors else 1
    return 0


def _split_metric_names(spec: str) -> list[str]:
    """Split a comma-separated metric list, keeping external descriptors whole.

    "mode=..." fragments belong to the preceding external:... descriptor, so
    "chrf,external:cmd=scorer --stdio,mode=qe" parses as two metrics.
    """
    names: list[str] = []
    for fragment in (f.strip() for f in spec.split(",")):
        if not fragment:
            continue
        if names and names[-1].startswith("external:") and fragment.startswith("mode="):
            names[-1] += "," + fragment
        else:
            names.append(fragment)
    return names


def _read_score_file(path: str, stack: ExitStack) -> dict[str, dict[str, float]]:
    """JSONL of {"seg_id","system","score"} -> seg_id -> system -> score."""
    table: dict[str, dict[str, float]] = {}
    for line_no, line in enumerate(_open_in(path, stack), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            seg_id, system, score = obj["seg_id"], obj["system"], float(obj["score"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
        table.setdefault(seg_id, {})[system] = score
    return table


def cmd_metaeval(args: argparse.Namespace) -> int:
    with ExitStack() as stack:
        gold = _read_score_file(args.gold, stack)
        metric = _read_score_file(args.metric, stack)
        if args.level == "segment":
            data = evaluation.MetaEvalInput(gold=gold, metric=metric)
            accuracy = evaluation.segment_pairwise_accuracy_grouped(data, args.tie_eps)
        else:
            def system_means(table: dict[str, dict[str, float]]) -> dict[str, float]:
                sums: dict[str, list[float]] = {}
                for by_system in table.values():
                    for system, score in by_system.items():
                        sums.setdefault(system, []).append(score)
                return {s: sum(v) / len(v) for s, v in sums.items()}

            accuracy = evaluation.system_pairwise_accuracy(
                system_means(gold), system_means(metric)
            )
        out = _open_out(args.out, stack)
        obj = {"level": args.level, "pairwise_accuracy": core.quantize_score(accuracy)}
        out.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return 0


def cmd_crossbleu(args: argparse.Namespace) -> int:
    with ExitStack() as stack:
        if args.names:
            names = [n.strip() for n in args.names.split(",")]
            if len(names) != len(args.inputs):
                raise UsageError("--names must match the number of input files")
        else:
            names = [os.path.splitext(os.path.basename(p))[0] for p in args.inputs]
        systems = {
            name: _read_outputs_file(path, stack)
            for name, path in zip(names, args.inputs)
        }
        matrix = metrics.cross_bleu_matrix(systems)
        obj = {
            "names": list(matrix.names),
            "matrix": [[core.quantize_score(v) for v in row] for row in matrix.values],
        }
        out = _open_out(args.out, stack)
        out.write(json.dumps(obj, ensure_ascii=False) + "\n")
        width = max(len(n) for n in matrix.names) + 2
        header = " " * width + "".join(n.rjust(width) for n in matrix.names)
        print(header, file=sys.stderr)
        for name, row in zip(matrix.names, matrix.values):
            cells = "".join(f"{v:.2f}".rjust(width) for v in row)
            print(name.ljust(width) + cells, file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser and job files.


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mbrkit",
        description="Candidate reranking and distillation-dataset toolkit.",
    )
    parser.add_argument("--job", help="run from a job file instead of flags")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sample", help="generate candidates by epsilon sampling")
    p.add_argument("--sources", required=True, help="segment JSONL or plain lines ('-' for stdin)")
    p.add_argument("--out", default=None)
    p.add_argument("--provider", default="toy", help="'toy' or a provider model JSON file")
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--num-samples", type=int, default=256)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("decide", help="select outputs from a candidate file")
    p.add_argument("--candidates", required=True)
    p.add_argument("--method", required=True, choices=["mbr", "qe", "beam", "greedy", "sample"])
    p.add_argument("--utility", default=None)
    p.add_argument("--include-self", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--emit", choices=["selections", "dataset"], default="selections")
    p.add_argument("--teacher-id", default="unknown")
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--dump-matrix", default=None)
    p.add_argument("--provider", default="toy")
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("distill", help="emit a distillation dataset with a manifest")
    p.add_argument("--method", required=True, choices=list(distill.DISTILL_METHODS))
    p.add_argument("--teacher-id", required=True)
    p.add_argument("--sources", default=None)
    p.add_argument("--candidates", default=None)
    p.add_argument("--utility", default=None)
    p.add_argument("--include-self", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--skip-failed", action="store_true")
    p.add_argument("--provider", default="toy")
    p.add_argument("--epsilon", type=float, default=0.02)
    p.add_argument("--num-samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--beam-size", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--parent-manifest", default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("mix", help="combine distill datasets")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--policy", choices=["balanced", "concat"], default="balanced")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("filter", help="length/ratio filtering and deduplication")
    p.add_argument("--tsv", default=None, help="source\\ttarget per line")
    p.add_argument("--src", default=None)
    p.add_argument("--tgt", default=None)
    p.add_argument("--max-src-tokens", type=int, default=250)
    p.add_argument("--max-ratio", type=float, default=1.5)
    p.add_argument("--dedup", choices=list(corpusprep.DEDUP_MODES), default="none")
    p.add_argument("--strict-ratio", action="store_true",
                   help="apply the ratio source/target instead of max/min")
    p.add_argument("--classifier", default=None,
                   help="external keep/drop command (one source\\ttarget line in, "
                        "one 1/0 line out)")
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("evaluate", help="MQM tables, metric reports, histograms")
    p.add_argument("--mqm", default=None, help="MQM annotation JSONL")
    p.add_argument("--outputs", action="append", default=None, metavar="NAME=PATH")
    p.add_argument("--refs", default=None)
    p.add_argument("--sources", default=None,
                   help="per-segment sources (needed by reference-free metrics)")
    p.add_argument("--metrics", default="chrf")
    p.add_argument("--scores", default=None, help="selection/matrix dump to histogram")
    p.add_argument("--scores-from", choices=["all", "top1"], default="all")
    p.add_argument("--histogram-out", default=None)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("metaeval", help="pairwise accuracy of a metric against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--level", choices=["segment", "system"], default="segment")
    p.add_argument("--tie-eps", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metaeval)

    p = sub.add_parser("crossbleu", help="corpus-BLEU similarity matrix between systems")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--names", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_crossbleu)

    return parser


def _job_spec(args: argparse.Namespace) -> dict:
    payload = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "command", "job")
    }
    return {"schema": JOB_SCHEMA, "command": args.command, "args": payload}


def load_job(path: str, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Build a namespace from a job file; unknown fields are rejected."""
    with open(path, encoding="utf-8") as handle:
        try:
            obj = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed job file {path}: {exc}") from exc
    if obj.get("schema") != JOB_SCHEMA:
        raise UsageError(f"job file schema must be {JOB_SCHEMA}, got {obj.get('schema')!r}")
    command = obj.get("command")
    args_obj = obj.get("args", {})
    if not isinstance(args_obj, dict):
        raise UsageError("job file 'args' must be an object")
    sub_actions = [
        action for action in parser._actions
        if isinstance(action, argparse._SubParsersAction)
    ]
    choices = sub_actions[0].choices
    if command not in choices:
        raise UsageError(f"job file names unknown command {command!r}")
    subparser = choices[command]
    known = {
        action.dest for action in subparser._actions if action.dest != "help"
    }
    unknown = sorted(set(args_obj) - known)
    if unknown:
        raise UsageError(f"job file has unknown fields for {command!r}: {unknown}")
    namespace = argparse.Namespace()
    for action in subparser._actions:
        if action.dest == "help":
            continue
        setattr(namespace, action.dest, action.default)
    missing = [
        action.dest
        for action in subparser._actions
        if getattr(action, "required", False) and action.dest not in args_obj
    ]
    if missing:
        raise UsageError(f"job file missing required fields for {command!r}: {missing}")
    for key, value in args_obj.items():
        setattr(namespace, key, value)
    namespace.command = command
    namespace.func = subparser.get_default("func")
    namespace.job = path
    return namespace


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.job:
            if args.command:
                raise UsageError("--job replaces the subcommand; give one or the other")
            args = load_job(args.job, parser)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 2
        print(json.dumps(_job_spec(args), ensure_ascii=False), file=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except MbrkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
