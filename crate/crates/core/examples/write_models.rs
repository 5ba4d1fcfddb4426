use chainvoice_core::model::{fit_model, published_scenarios, FitOptions};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/models".into());
    let (model, report) = fit_model(&published_scenarios(), &FitOptions::default()).expect("fit");
    print!("{}", report.table());
    println!(
        "iterations {} max residual {:.3e}",
        report.iterations, report.max_abs_residual
    );
    println!("{:?}", report.cpts);
    model.write_dir(std::path::Path::new(&dir)).expect("write");
}
