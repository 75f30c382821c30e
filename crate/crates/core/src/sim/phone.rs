use std::collections::BTreeMap;

use crate::risk::{ContactHandle, PhoneData, RiskLevel};
use crate::transport::PhoneTransport;
use crate::world::AgentId;

/// Simulator-side state of one installed app.
pub(crate) struct Phone {
    pub data: PhoneData,
    /// Level last broadcast for each encounter day.
    pub sent: BTreeMap<u32, RiskLevel>,
    pub today_level: RiskLevel,
    /// Contacts per encounter day, for the direct path.
    pub outbox: BTreeMap<u32, Vec<(AgentId, ContactHandle)>>,
    pub transport: Option<PhoneTransport>,
    pub opted_in: bool,
    /// Heat-map level and mobility nibble reported per day, for corrections.
    pub reported: BTreeMap<u32, (RiskLevel, u8)>,
}

impl Phone {
    pub fn new(data: PhoneData, level: RiskLevel, transport: Option<PhoneTransport>) -> Self {
        Phone { data, sent: BTreeMap::new(), today_level: level, outbox: BTreeMap::new(), transport, opted_in: false, reported: BTreeMap::new() }
    }

    pub fn purge(&mut self, window_start: u32) {
        self.sent = self.sent.split_off(&window_start);
        self.outbox = self.outbox.split_off(&window_start);
        self.reported = self.reported.split_off(&window_start);
    }
}
