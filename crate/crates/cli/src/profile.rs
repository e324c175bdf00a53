use std::fs;
use std::path::Path;

use dualpass_core::DeviceDescriptor;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A device descriptor stored in a JSON file, plus a label for humans.
///
/// ```json
/// { "label": "alice's phone", "phone_number": "+15550100",
///   "imei": "356938035643809", "sim_id": "8901260", "device_kind": "smartphone" }
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    #[serde(default)]
    pub label: String,
    #[serde(flatten)]
    pub device: DeviceDescriptor,
}

impl DeviceProfile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Profile(format!("{}: {e}", path.display())))?;
        let profile: DeviceProfile =
            serde_json::from_str(&text).map_err(|e| CliError::Profile(format!("{}: {e}", path.display())))?;
        profile
            .device
            .check()
            .map_err(|e| CliError::Profile(format!("{}: {e}", path.display())))?;
        Ok(profile)
    }
}
