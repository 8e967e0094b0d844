//! Score-driven aggregated modified Hasbrouck models of returns and trade
//! signs: simulation, estimation, filtering of the time-varying
//! instantaneous impact, impulse responses and permanent-impact estimates.

pub mod benchmark;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod impact;
pub mod io;
pub mod irf;
pub mod lags;
pub mod models;
pub mod ols;
pub mod optim;
pub mod params;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
pub use lags::{aggregate_lags, AggregationSpec, Design, LagAggregates, LagSpec};
pub use params::{conditional_means, logistic, ConditionalMeans, StaticParams, Variant};
pub use series::{SeriesStats, TickSeries, TradeEvent};
