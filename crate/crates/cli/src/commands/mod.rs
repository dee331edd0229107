mod data;
mod generate;
mod metrics;

use emoforge_core::eval::StdMode;

use crate::config::{FileConfig, RunConfig};
use crate::{fail, Cli, Command, Failure, WithCode, EXIT_CONFIG};

pub fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    let file = FileConfig::load(cli.config.as_deref()).code(EXIT_CONFIG)?;
    let taxonomy = cli
        .taxonomy
        .clone()
        .or_else(|| file.attribute_schema.taxonomy.clone())
        .unwrap_or_else(|| "emoset".into());
    let seed = cli.seed.or(file.dataset_store.seed).unwrap_or(0);

    match &cli.command {
        Command::Generate(args) => {
            let cfg = RunConfig::resolve(file, args.overrides(cli)).code(EXIT_CONFIG)?;
            generate::run(&cfg, args.fresh)
        }
        Command::Validate { path } => data::validate(path),
        Command::Split { held_in, held_out } => data::split(held_in, held_out),
        Command::Sample { input, output, fraction } => {
            let Some(fraction) = fraction.or(file.dataset_store.sample_fraction) else {
                return fail(EXIT_CONFIG, "no fraction given (--fraction or dataset_store.sample_fraction)");
            };
            data::sample(input, output, fraction, seed)
        }
        Command::Stats { path } => data::stats(path),
        Command::Export { input, output } => data::export(input, output),
        Command::Eval { predictions, gold, summary, parsed } => {
            metrics::eval(&taxonomy, predictions, gold, summary.as_deref(), parsed.as_deref())
        }
        Command::Sensitivity { runs, sample_std, summary } => {
            let mode = if *sample_std { StdMode::Sample } else { file.eval_harness.std.unwrap_or_default() };
            metrics::sensitivity(runs, mode, summary.as_deref())
        }
        Command::Report { summaries, fixtures, json } => metrics::report(summaries, *fixtures, json.as_deref()),
    }
}

