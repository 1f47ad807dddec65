use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Hours per episode.
pub const HOURS: usize = 24;
/// Sensor channels per hour.
pub const CHANNELS: usize = 8;

/// The eight environmental sensors, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorChannel {
    Bathroom,
    Hallway,
    Bedroom,
    Lounge,
    Kitchen,
    FridgeDoor,
    Kettle,
    Microwave,
}

impl SensorChannel {
    pub const ALL: [SensorChannel; CHANNELS] = [
        SensorChannel::Bathroom,
        SensorChannel::Hallway,
        SensorChannel::Bedroom,
        SensorChannel::Lounge,
        SensorChannel::Kitchen,
        SensorChannel::FridgeDoor,
        SensorChannel::Kettle,
        SensorChannel::Microwave,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorChannel::Bathroom => "bathroom",
            SensorChannel::Hallway => "hallway",
            SensorChannel::Bedroom => "bedroom",
            SensorChannel::Lounge => "lounge",
            SensorChannel::Kitchen => "kitchen",
            SensorChannel::FridgeDoor => "fridge_door",
            SensorChannel::Kettle => "kettle",
            SensorChannel::Microwave => "microwave",
        }
    }

    /// Kitchen and the three kitchen appliances.
    pub fn is_kitchen(self) -> bool {
        matches!(
            self,
            SensorChannel::Kitchen | SensorChannel::FridgeDoor | SensorChannel::Kettle | SensorChannel::Microwave
        )
    }
}

impl fmt::Display for SensorChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorChannel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "living_room" | "living room" => "lounge",
            "fridge" | "fridge door" => "fridge_door",
            "toaster" => "microwave",
            other => other,
        };
        SensorChannel::ALL
            .into_iter()
            .find(|c| c.name() == alias)
            .ok_or_else(|| format!("unknown channel {s:?}"))
    }
}

/// One day of hourly activation counts with a binary incident label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    /// `HOURS × CHANNELS`, row-major by hour.
    pub matrix: Vec<f64>,
    pub label: u8,
    pub meta: Option<String>,
}

impl Episode {
    pub fn new(id: impl Into<String>, matrix: Vec<f64>, label: u8) -> Self {
        assert_eq!(matrix.len(), HOURS * CHANNELS, "episode matrix must be 24 x 8");
        assert!(label <= 1, "labels are binary");
        Self {
            id: id.into(),
            matrix,
            label,
            meta: None,
        }
    }

    pub fn count(&self, hour: usize, channel: SensorChannel) -> f64 {
        self.matrix[hour * CHANNELS + channel.index()]
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}
