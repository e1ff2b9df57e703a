//! Writes the synthetic four-horizon survey panels used by the tests.
//!
//! Usage: `cargo run -p fcp-core --example make_fixtures -- <out_dir>`

use std::fs::File;
use std::path::PathBuf;

use fcp_core::dgp::spf_like_panels;
use fcp_core::io::write_panel;

fn main() -> fcp_core::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    for panel in spf_like_panels(20_240_601, 120, 14)? {
        let h = panel.horizon.unwrap_or(0);
        let path = dir.join(format!("survey_h{h}.csv"));
        write_panel(&panel, File::create(&path)?)?;
        println!("{}", path.display());
    }
    Ok(())
}
