//! Predictive flexibility aggregation for low-voltage distribution grids.
//!
//! Homes run explicit (multiparametric) MPC policies computed offline and send
//! their cost-annotated P-Q flexibility charts to a central optimal power flow
//! controller every real-time tick.

// index loops mirror the matrix notation of the numerics
#![allow(clippy::needless_range_loop)]
// `!(a <= b)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod central;
pub mod lp;
pub mod mplp;
pub mod period;
pub mod planning;
pub mod realtime;
pub mod sim;

pub use assets::{BatteryParams, PvParams, Tariff};
pub use central::{FeederModel, Line};
pub use period::{PeriodConfig, PeriodRegionStore};
pub use planning::{PlanningHorizon, ValueFunctionPWA};
pub use realtime::{ChartMessage, FlexChart2D, Measurements, SetpointMessage};
pub use sim::{RunMetrics, RunOutput, Scenario, TraceRow};
