//! Time-series modeling of the fused score series: differencing, ACF/PACF
//! diagnostics, conditional-least-squares ARIMA fitting, forecasting, and
//! Ljung-Box residual whiteness testing.

mod arima;
mod diagnostics;
mod diff;
mod optim;

pub use arima::{fit_arima, fit_arima_with_options, select_order, ArimaModel, ArimaSpec, FitOptions};
pub use diagnostics::{acf, ljung_box, pacf, DiagnosticsReport, LjungBoxResult};
pub use diff::{difference, integrate};
