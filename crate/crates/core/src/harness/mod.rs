//! Campaign sweeps over strategies, antenna and tone counts, codebook
//! sizes and locations, with CSV output.

pub mod campaign;
pub mod config;
pub mod oracle;
pub mod report;

pub use campaign::{run_campaign, run_campaign_to_dir, run_detail, CampaignOutput, DETAIL_FILE, SUMMARY_FILE};
pub use config::{figure_config, CampaignConfig, Figure, Strategy};
pub use report::{db_gain, detail_csv, summarize, DetailRow};
