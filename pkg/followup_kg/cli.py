"""Command-line entry point: ``followup-kg <command> ...``."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import httpx
from dotenv import load_dotenv

from .agent import AgentContext, OracleKnowledge, TraversalAgent, agents
from .answer import (
    answer_question,
    generate_closed_book_answer,
    judge_exact,
    judge_llm,
    write_answer_records,
)
from .config import EngineConfig, load_config
from .corpus import Corpus, load_corpus
from .embedding import CachedEmbeddingProvider
from .errors import AgentError, DataError, NetworkError, TraversalError
from .evaluation import BASELINES, EvalSettings, benchmark_agent, run_eval, sweep_decode_params
from .graph import build_graph, load_graph, save_graph
from .lexical import fit_bm25, fit_tfidf
from .schemas import AnswerRecord, GoldenRecord, Passage, Verdict
from .synth import (
    SynthSpec,
    build_followupqa,
    generate_synthetic,
    load_golden_records,
    load_hotpot_records,
    load_samples,
    save_bundle,
    save_samples,
    to_hotpot_records,
    write_splits,
)
from .traversal import traverse

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NETWORK = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _corpus(args: argparse.Namespace, config: EngineConfig) -> Corpus:
    path = args.corpus or config.corpus_path
    if path is None:
        raise DataError("no corpus given: pass --corpus or set corpus_path in the config")
    return load_corpus(path)


def _graph_path(args: argparse.Namespace, config: EngineConfig) -> Path:
    path = args.graph or config.graph_path
    if path is None:
        raise DataError("no graph given: pass --graph or set graph_path in the config")
    return Path(path)


def _knowledge(args: argparse.Namespace) -> Optional[OracleKnowledge]:
    if getattr(args, "questions", None) is None:
        return None
    return OracleKnowledge.from_records(load_golden_records(args.questions))


def _make_agent(name: str, config: EngineConfig, corpus: Optional[Corpus], knowledge: Optional[OracleKnowledge]):
    context = AgentContext(corpus=corpus, knowledge=knowledge, evidence_char_budget=config.evidence_char_budget)
    if agents.meta(name)["needs_network"]:
        context.client = config.chat_client("agent_llm")
        context.decode = config.agent_decode
        context.template = config.prompt("followup")
    agent = agents.create(name, context)
    return agent


def _traversal_config(args: argparse.Namespace, config: EngineConfig):
    updates = {}
    for field in ("budget", "n_seed", "top_k", "max_hops"):
        value = getattr(args, field, None)
        if value is not None:
            updates[field] = value
    if getattr(args, "no_early_termination", False):
        updates["early_termination"] = False
    return config.traversal.model_validate({**config.traversal.model_dump(), **updates})


def _print_json(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- commands --------------------------------------------------------------


def cmd_build_graph(args: argparse.Namespace, config: EngineConfig) -> int:
    corpus = _corpus(args, config)
    role = config.graph_embedding
    if args.provider is not None:
        role = role.model_copy(update={"kind": args.provider})
    k_edges = args.k_edges or config.k_edges
    graph = build_graph(corpus, role.build(), k_edges=k_edges, workers=config.workers)
    save_graph(graph, _graph_path(args, config))
    _print_json({"nodes": len(graph), "edges": len(graph.edges()), "k_edges": k_edges, "provider": graph.provider_name})
    return EXIT_OK


def cmd_traverse(args: argparse.Namespace, config: EngineConfig) -> int:
    corpus = _corpus(args, config)
    graph = load_graph(_graph_path(args, config), corpus)
    agent = _make_agent(args.agent, config, corpus, _knowledge(args))
    result = traverse(
        graph,
        fit_tfidf(corpus),
        agent,
        CachedEmbeddingProvider(config.ranker().build()),
        args.query,
        _traversal_config(args, config),
        trace=args.trace is not None,
    )
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8", newline="\n") as f:
            for step in result.trace or []:
                f.write(step.model_dump_json() + "\n")
    sys.stdout.write(result.model_dump_json(indent=2, exclude={"trace"}) + "\n")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: EngineConfig) -> int:
    corpus = _corpus(args, config)
    graph = load_graph(_graph_path(args, config), corpus)
    records = load_golden_records(args.questions)
    knowledge = OracleKnowledge.from_records(records)
    agent_map: Dict[str, TraversalAgent] = {
        name: _make_agent(name, config, corpus, knowledge) for name in _split_list(args.agents)
    }
    baselines = _split_list(args.baselines)
    settings = EvalSettings(
        traversal=_traversal_config(args, config),
        threshold=config.eval_threshold,
        baselines=baselines,
        compare_early_termination=args.compare_early_termination,
        workers=config.workers,
        progress=args.progress,
        answer_char_budget=config.answer_char_budget,
    )
    report = run_eval(
        graph,
        fit_tfidf(corpus),
        agent_map,
        records,
        CachedEmbeddingProvider(config.ranker().build()),
        em_provider=config.em().build(),
        settings=settings,
        bm25=fit_bm25(corpus) if "bm25" in baselines else None,
        answer_client=config.chat_client("answer_llm") if args.answer else None,
        judge_client=config.chat_client("judge_llm") if args.answer and args.judge == "llm" else None,
        answer_template=config.prompt("answer") if args.answer else None,
        judge_template=config.prompt("judge") if args.answer and args.judge == "llm" else None,
    )
    report.check_consistency()
    report.write(args.out)
    for summary in report.summaries:
        sys.stdout.write(summary.model_dump_json() + "\n")
    return EXIT_OK


def cmd_gen_synth(args: argparse.Namespace, config: EngineConfig) -> int:
    spec = SynthSpec()
    if args.spec is not None:
        spec = SynthSpec.model_validate_json(Path(args.spec).read_text(encoding="utf-8"))
    updates = {"seed": args.seed if args.seed is not None else spec.seed}
    if args.n_questions is not None:
        updates["n_questions"] = args.n_questions
    spec = SynthSpec.model_validate({**spec.model_dump(), **updates})
    bundle = generate_synthetic(spec)
    save_bundle(bundle, args.out)
    hotpot = to_hotpot_records(bundle)
    with open(Path(args.out) / "hotpot.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for record in hotpot:
            f.write(record.model_dump_json() + "\n")
    unlinked = [row.question_id for row in bundle.report if not row.linked]
    _print_json({"passages": len(bundle.corpus), "questions": len(bundle.records), "unlinked_chains": unlinked})
    return EXIT_OK


def cmd_gen_followupqa(args: argparse.Namespace, config: EngineConfig) -> int:
    records = load_hotpot_records(getattr(args, "in"))
    client = config.chat_client("dataset_llm") if args.mode == "llm" else None
    result = build_followupqa(
        records,
        mode=args.mode,
        client=client,
        seed=_seed(args, config),
        budget=args.budget,
        template=config.prompt("dataset") if client is not None else None,
        workers=config.workers,
    )
    out = Path(args.out)
    if args.split:
        sizes = write_splits(result.samples, out, seed=_seed(args, config))
    else:
        save_samples(result.samples, out)
        sizes = {"samples": len(result.samples)}
    _print_json({**sizes, "skipped": result.skipped})
    return EXIT_OK


def cmd_benchmark_agent(args: argparse.Namespace, config: EngineConfig) -> int:
    samples = load_samples(args.testset)
    provider = CachedEmbeddingProvider(config.em().build())
    out = Path(args.out)
    if args.grid:
        reports = sweep_decode_params(
            config.chat_client("agent_llm"),
            samples,
            provider,
            template=config.prompt("followup"),
            workers=config.workers,
        )
        for i, report in enumerate(reports):
            report.write(out / f"grid-{i:02d}")
            sys.stdout.write(report.model_dump_json(exclude={"rows"}) + "\n")
        return EXIT_OK
    agent = _make_agent(args.agent, config, None, _knowledge(args))
    report = benchmark_agent(agent, samples, provider, workers=config.workers)
    report.write(out)
    sys.stdout.write(report.model_dump_json(exclude={"rows"}) + "\n")
    return EXIT_OK


def cmd_answer(args: argparse.Namespace, config: EngineConfig) -> int:
    corpus = _corpus(args, config)
    records = load_golden_records(args.questions)
    client = config.chat_client("answer_llm")
    judge = config.chat_client("judge_llm") if args.judge == "llm" else None
    judge_template = config.prompt("judge") if judge is not None else None

    def verdict_for(record: GoldenRecord, answer: str):
        if judge is not None:
            return judge_llm(judge, record.question, answer, record.answer, judge_template)
        return judge_exact(answer, record.answer)

    def answered(record: GoldenRecord, passages: List[Passage]) -> AnswerRecord:
        return answer_question(
            client,
            record.id,
            record.question,
            passages,
            record.answer,
            judge,
            config.answer_char_budget,
            answer_template,
            judge_template,
        )

    results: List[AnswerRecord] = []
    if args.context == "retrieved":
        answer_template = config.prompt("answer")
        graph = load_graph(_graph_path(args, config), corpus)
        tfidf = fit_tfidf(corpus)
        ranker = CachedEmbeddingProvider(config.ranker().build())
        agent = _make_agent(args.agent, config, corpus, OracleKnowledge.from_records(records))
        traversal = _traversal_config(args, config)
        for record in records:
            retrieved = traverse(graph, tfidf, agent, ranker, record.question, traversal).retrieved
            if not retrieved:
                logger.warning("Nothing retrieved for %s; judged incorrect", record.id)
            results.append(answered(record, [corpus.get(pid) for pid in retrieved]))
    elif args.context == "golden":
        answer_template = config.prompt("answer")
        for record in records:
            results.append(answered(record, [corpus.get(pid) for pid in record.golden_ids]))
    else:
        template = config.prompt("closed_book")
        for record in records:
            answer = generate_closed_book_answer(client, record.question, template)
            results.append(
                AnswerRecord(
                    question_id=record.id,
                    question=record.question,
                    retrieved_ids=[],
                    answer=answer,
                    gold_answer=record.answer,
                    verdict=verdict_for(record, answer),
                )
            )
    write_answer_records(results, args.out)
    judged = [r for r in results if r.verdict is not None]
    accuracy = 100.0 * sum(r.verdict is Verdict.CORRECT for r in judged) / len(judged) if judged else None
    _print_json({"answers": len(results), "accuracy": accuracy, "context": args.context})
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def _split_list(value: Optional[str]) -> List[str]:
    return [item.strip() for item in (value or "").split(",") if item.strip()]


def _seed(args: argparse.Namespace, config: EngineConfig) -> int:
    return args.seed if args.seed is not None else config.seed


def _add_traversal_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--budget", type=int, help="Passage budget K")
    parser.add_argument("--n-seed", dest="n_seed", type=int, help="TF-IDF seeding passages")
    parser.add_argument("--top-k", dest="top_k", type=int, help="Neighbors selected per expansion")
    parser.add_argument("--max-hops", dest="max_hops", type=int, help="Maximum hops from a seed")
    parser.add_argument(
        "--no-early-termination",
        action="store_true",
        help="A stop decision retires only its own path",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="followup-kg", description="Agent-guided retrieval over passage knowledge graphs.")
    parser.add_argument("--config", help="EngineConfig JSON file")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (stderr)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    agent_help = agents.help_text()

    p = sub.add_parser("build-graph", help="Embed a corpus and save its kNN graph")
    p.add_argument("--corpus", help="Corpus JSONL")
    p.add_argument("--out", dest="graph", help="Graph file to write")
    p.add_argument("--k-edges", dest="k_edges", type=int, help="kNN out-degree")
    p.add_argument("--provider", choices=["hash", "remote"], help="Override the graph embedding kind")
    p.set_defaults(handler=cmd_build_graph)

    p = sub.add_parser("traverse", help="Retrieve passages for one query")
    p.add_argument("--corpus", help="Corpus JSONL")
    p.add_argument("--graph", help="Graph file")
    p.add_argument("--query", required=True, help="Question text")
    p.add_argument("--agent", default="keyword", choices=agents.names(), help=agent_help)
    p.add_argument("--questions", help="Golden records JSONL (oracle agent)")
    p.add_argument("--trace", help="Write per-step trace JSONL here")
    _add_traversal_flags(p)
    p.set_defaults(handler=cmd_traverse)

    p = sub.add_parser("eval", help="Evaluate agents and baselines on golden records")
    p.add_argument("--corpus", help="Corpus JSONL")
    p.add_argument("--graph", help="Graph file")
    p.add_argument("--questions", required=True, help="Golden records JSONL")
    p.add_argument("--agents", default="oracle", help="Comma-separated agent names")
    p.add_argument("--baselines", default="", help=f"Comma-separated, any of {', '.join(BASELINES)}")
    p.add_argument("--compare-early-termination", action="store_true", help="Add a no-early-termination arm")
    p.add_argument("--answer", action="store_true", help="Generate and judge answers (needs answer_llm)")
    p.add_argument("--judge", choices=["llm", "exact"], default="exact", help="Answer judge")
    p.add_argument("--progress", action="store_true", help="Show a progress bar")
    p.add_argument("--out", required=True, help="Report directory")
    _add_traversal_flags(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gen-synth", help="Generate a synthetic multi-hop bundle")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--n-questions", dest="n_questions", type=int, help="Total questions")
    p.add_argument("--out", required=True, help="Bundle directory")
    p.set_defaults(handler=cmd_gen_synth)

    p = sub.add_parser("gen-followupqa", help="Build follow-up question samples from multi-hop records")
    p.add_argument("--in", required=True, help="HotpotQA-format records JSONL")
    p.add_argument("--out", required=True, help="Samples JSONL, or a directory with --split")
    p.add_argument("--mode", choices=["llm", "oracle"], default="oracle", help="Who writes the follow-ups")
    p.add_argument("--budget", type=int, help="Maximum records sampled")
    p.add_argument("--split", action="store_true", help="Write train/val/test splits")
    p.set_defaults(handler=cmd_gen_followupqa)

    p = sub.add_parser("benchmark-agent", help="Score an agent's follow-up questions")
    p.add_argument("--testset", required=True, help="Follow-up samples JSONL")
    p.add_argument("--agent", default="llm", choices=agents.names(), help=agent_help)
    p.add_argument("--questions", help="Golden records JSONL (oracle agent)")
    p.add_argument("--grid", action="store_true", help="Sweep decode parameters (llm agent)")
    p.add_argument("--out", required=True, help="Report directory")
    p.set_defaults(handler=cmd_benchmark_agent)

    p = sub.add_parser("answer", help="Generate answers for golden records")
    p.add_argument("--corpus", help="Corpus JSONL")
    p.add_argument("--graph", help="Graph file")
    p.add_argument("--questions", required=True, help="Golden records JSONL")
    p.add_argument("--agent", default="llm", choices=agents.names(), help=agent_help)
    p.add_argument(
        "--context",
        choices=["retrieved", "golden", "none"],
        default="retrieved",
        help="Answer from traversal results, golden passages, or no context",
    )
    p.add_argument("--judge", choices=["llm", "exact"], default="llm", help="Answer judge")
    p.add_argument("--out", required=True, help="Answer records JSONL")
    _add_traversal_flags(p)
    p.set_defaults(handler=cmd_answer)

    return parser


def _exit_code(error: BaseException) -> int:
    if isinstance(error, TraversalError) and error.__cause__ is not None:
        return _exit_code(error.__cause__)
    if isinstance(error, (NetworkError, httpx.HTTPError)):
        return EXIT_NETWORK
    return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    load_dotenv()
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        return args.handler(args, config)
    except (NetworkError, httpx.HTTPError, DataError, AgentError, TraversalError, ValueError, OSError, KeyError) as e:
        code = _exit_code(e)
        logger.debug("Command failed", exc_info=True)
        sys.stderr.write(f"followup-kg: error: {e}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
