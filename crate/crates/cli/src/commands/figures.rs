use anyhow::Result;
use serde::Serialize;

use riskaudit::figures::{calibration_rows, histogram_rows, stratified_rows, FigureRow};
use riskaudit::{calibration_curve, score_histogram, stratified_fpr};

use super::level;
use crate::args::{FiguresArgs, Format};
use crate::meta::{self, Metadata};
use crate::output;
use crate::svg;

#[derive(Debug, Serialize)]
struct FigureDoc<'a> {
    metadata: Metadata,
    figure: u8,
    rows: &'a [FigureRow],
}

pub fn figures(args: &FiguresArgs) -> Result<()> {
    let loaded = meta::load(&args.data)?;
    let level = level(&args.analysis)?;
    let t = args.analysis.threshold;
    let mut metadata = Metadata::new("figures", false)
        .with_data(&loaded)
        .param("figure", args.figure)
        .param("confidence", level);

    let rows = match args.figure {
        1 => {
            let curves = loaded
                .groups
                .iter()
                .map(|g| calibration_curve(&loaded.cohort, g, level))
                .collect::<riskaudit::Result<Vec<_>>>()?;
            calibration_rows(&curves)
        }
        2 => {
            metadata = metadata
                .param("threshold", t)
                .param("degree", args.strata.degree)
                .param("bins", &args.strata.bins);
            stratified_rows(&stratified_fpr(&loaded.cohort, args.strata.degree, &args.strata.bins, t, level)?)
        }
        3 => {
            let histograms = loaded
                .groups
                .iter()
                .map(|g| score_histogram(&loaded.cohort, g, None))
                .collect::<riskaudit::Result<Vec<_>>>()?;
            histogram_rows(&histograms)
        }
        n => return Err(crate::usage(format!("unknown figure {n}; expected 1, 2 or 3"))),
    };

    if let Some(path) = &args.svg {
        output::write_atomic(path, svg::render(args.figure, &rows).as_bytes())?;
    }
    let bytes = match args.format {
        Format::Csv => output::figure_csv(&rows)?,
        Format::Json => output::json_bytes(&FigureDoc {
            metadata,
            figure: args.figure,
            rows: &rows,
        })?,
    };
    output::emit(args.out.as_deref(), &bytes)
}
