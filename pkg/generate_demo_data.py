import argparse

from gppp.logging_setup import configure_logging
from utils.data_generator import generate_initial_data

parser = argparse.ArgumentParser(description="Write a demo pooled sample and run config")
parser.add_argument("--out", default="data", help="output directory")
parser.add_argument("--study", type=int, choices=(1, 2), default=2)
parser.add_argument("--population-size", type=int, default=20_000)
parser.add_argument("--seed", type=int, default=2024)
parser.add_argument("--overwrite", action="store_true")
args = parser.parse_args()

configure_logging("INFO")

print("Generating demo data...")
sample_path, config_path = generate_initial_data(args.out, args.study, args.population_size,
                                                 args.seed, overwrite=args.overwrite)
print(f"Done! Try:\n  python -m gppp estimate --config {config_path} --out results")
