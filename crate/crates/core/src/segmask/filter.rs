use super::mask::HandMask;
use crate::error::{Error, Result};
use crate::events::{EventPoint, EventWindow, SensorGeometry};
use crate::repr::{cloud_from_events, EventCloud};

/// Events of all windows, in order, whose pixel is set in `mask`.
///
/// Membership uses the integer event coordinates, never de-normalised cloud
/// coordinates.
pub fn filter_events(windows: &[EventWindow], mask: &HandMask, geometry: SensorGeometry) -> Result<Vec<EventPoint>> {
    mask.check_geometry(geometry)?;
    Ok(windows
        .iter()
        .flat_map(|w| w.events.iter())
        .filter(|e| mask.get(e.x, e.y))
        .copied()
        .collect())
}

/// Builds one cloud from the mask survivors of `windows`, normalising time
/// over the whole span from the first window's start to the last one's end.
pub fn filter_cloud(
    windows: &[EventWindow],
    mask: &HandMask,
    geometry: SensorGeometry,
    budget: usize,
    seed: u64,
) -> Result<EventCloud> {
    let (Some(first), Some(last)) = (windows.first(), windows.last()) else {
        return Err(Error::config("filtering needs at least one window"));
    };
    let survivors = filter_events(windows, mask, geometry)?;
    Ok(cloud_from_events(&survivors, first.start_t, last.end_t, geometry, budget, seed))
}
