//! File formats: building description, weather series and results.

pub mod building;
pub mod results;
pub mod weather;

pub use building::{parse_building, serialize_building, BUILDING_FORMAT, BUILDING_VERSION};
pub use results::{format_value, write_plot_data, write_results};
pub use weather::{constant_weather, parse_weather, write_weather, WeatherGap, WeatherRecord, WeatherSeries, TIME_FORMAT, WEATHER_MAGIC};
