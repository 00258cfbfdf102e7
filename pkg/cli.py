#!/usr/bin/env python

import os
import sys
import argparse
import asyncio
import json
import logging
from datetime import datetime

from config import Config, create_default_configs
from scenario.fuzz_campaign import FuzzCampaign
from scenario.scenario_runner import ScenarioRunner
from scenario.tools.driver import EXIT_ASSERTION, EXIT_CONFIG

logger = logging.getLogger("chordsim.cli")


def configure_logging(level: str = Config.LOG_LEVEL) -> None:
    os.makedirs(Config.LOGS_DIR, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(),
            logging.FileHandler(os.path.join(Config.LOGS_DIR, f'chordsim_cli_{datetime.now().strftime("%Y%m%d")}.log'))
        ]
    )


async def run_scenario_command(args):
    """
    Run a scenario file and print its assertion verdicts.
    """
    runner = ScenarioRunner(config={"memory_dir": args.memory_dir} if args.memory_dir else None)

    logger.info(f"Running scenario {args.scenario} in {args.mode} mode with seed {args.seed}")
    result = await runner.run({
        "scenario_path": args.scenario,
        "mode": args.mode,
        "seed": args.seed,
        "max_steps": args.max_steps,
        "trace_path": args.trace,
        "verbose_fingers": args.verbose_fingers,
        "hop_budget_factor": Config.HOP_BUDGET_FACTOR,
        "convergence_factor": Config.CONVERGENCE_FACTOR,
    })

    if "error" in result:
        print(f"\nError: {result['error']}")
        return result["exit_status"]

    if not args.trace:
        print(result["trace_text"], end="")
    for line in result["assertions"]:
        print(line)
    for line in result["violations"]:
        print(f"violation {line}")
    for line in result["failures"]:
        print(line)
    print(f"exit_status={result['exit_status']}")
    return result["exit_status"]


async def fuzz_command(args):
    """
    Run a fuzz campaign and print its summary.
    """
    campaign_config = Config.get_campaign_config(args.campaign)
    if not campaign_config and args.campaign != "default":
        print(f"\nError: unknown campaign {args.campaign}")
        return EXIT_CONFIG

    campaign = FuzzCampaign(name=args.campaign, config=campaign_config)
    try:
        report = await campaign.run({
            "runs": args.runs,
            "nodes": args.nodes,
            "events": args.events,
            "seed": args.seed,
            "mode": args.mode,
            "report_path": args.report,
        })
    except ValueError as e:
        print(f"\nError: {e}")
        return EXIT_CONFIG

    print(json.dumps(report["summary"], indent=2))
    harness_errors = report["summary"].get("harness_error_seeds")
    if harness_errors:
        print(f"\nError: the schedule could not be driven for seeds {harness_errors}")
        return EXIT_CONFIG
    regular = report["parameters"]["mode"] == "regular"
    if regular and report["summary"]["clean_runs"] != report["summary"]["runs"]:
        return EXIT_ASSERTION
    return 0


async def replay_command(args):
    """
    Re-run the scenario named in a trace header and compare step by step.
    """
    runner = ScenarioRunner(config={"memory_dir": args.memory_dir} if args.memory_dir else None)
    try:
        result = await runner.replay(args.trace, args.scenario)
    except (OSError, ValueError) as e:
        print(f"\nError: {e}")
        return EXIT_CONFIG

    if "error" in result:
        print(f"\nError: {result['error']}")
        return EXIT_CONFIG
    if result["identical"]:
        print(f"Trace reproduced: {result['steps']} steps identical")
        return 0
    print(f"Traces diverge at step {result['first_difference']}")
    print("--- recorded")
    print(result["recorded"])
    print("+++ replayed")
    print(result["replayed"])
    return EXIT_ASSERTION


async def main(argv=None):
    parser = argparse.ArgumentParser(description="ChordSim - deterministic Chord protocol simulator CLI")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # Run command
    run_parser = subparsers.add_parser("run", help="Run a scenario file")
    run_parser.add_argument("scenario", help="Scenario file")
    run_parser.add_argument("--mode", choices=["regular", "unrestricted"], default=Config.MODE, help="Run mode")
    run_parser.add_argument("--seed", type=int, default=Config.SEED, help="Seed for the simulator's choices")
    run_parser.add_argument("--max-steps", type=int, default=Config.MAX_STEPS, help="Step limit")
    run_parser.add_argument("--trace", help="Write the trace to this file instead of stdout")
    run_parser.add_argument("--verbose-fingers", action="store_true", help="Include finger tables in the trace")
    run_parser.add_argument("--memory-dir", help="Also store the trace in this trace memory")

    # Fuzz command
    fuzz_parser = subparsers.add_parser("fuzz", help="Run a fuzz campaign")
    fuzz_parser.add_argument("--campaign", default="default", help="Campaign configuration name")
    fuzz_parser.add_argument("--runs", type=int, help="Number of seeded runs")
    fuzz_parser.add_argument("--nodes", type=int, help="Largest number of simultaneously active nodes")
    fuzz_parser.add_argument("--events", type=int, help="Events per run")
    fuzz_parser.add_argument("--seed", type=int, help="Seed of the first run")
    fuzz_parser.add_argument("--mode", choices=["regular", "unrestricted"], help="Run mode")
    fuzz_parser.add_argument("--report", help="Write the JSON campaign report to this file")

    # Replay command
    replay_parser = subparsers.add_parser("replay", help="Re-check a recorded trace against a fresh run")
    replay_parser.add_argument("--trace", required=True, help="Trace file, or a trace id with --memory-dir")
    replay_parser.add_argument("--memory-dir", help="Trace memory to look the trace up in")
    replay_parser.add_argument("--scenario", help="Scenario file, if not the one named in the trace header")

    # Initialize command
    init_parser = subparsers.add_parser("init", help="Write the default campaign configurations")
    init_parser.add_argument("--force", action="store_true", help="Overwrite existing configurations")

    # Parse arguments
    args = parser.parse_args(argv)

    if args.command == "run":
        return await run_scenario_command(args)
    elif args.command == "fuzz":
        return await fuzz_command(args)
    elif args.command == "replay":
        return await replay_command(args)
    elif args.command == "init":
        written = create_default_configs(args.force)
        Config.ensure_dirs()
        print(f"Campaign configurations written: {', '.join(written) or 'none'}")
        return 0
    else:
        parser.print_help()
        return 0

if __name__ == "__main__":
    configure_logging()
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.")
        sys.exit(1)
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        print(f"\nError: {str(e)}")
        sys.exit(EXIT_CONFIG)
