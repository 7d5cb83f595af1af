//! Experiment presets shipped with the simulator.

use crate::configfile::ConfigFile;
use crate::error::ConfigError;

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig2_sweep",
        summary: "ideal OQ switch, closed loop, switch size 16 down to 1 port",
        text: include_str!("../presets/fig2_sweep.toml"),
    },
    Preset {
        name: "fig3_latency",
        summary: "closed-loop throughput against added link latency",
        text: include_str!("../presets/fig3_latency.toml"),
    },
    Preset {
        name: "fig4_crossbars",
        summary: "OQ, VOQ iSLIP/RRM and IQ FIFO crossbars under the closed-loop workload",
        text: include_str!("../presets/fig4_crossbars.toml"),
    },
    Preset {
        name: "fig5_synth",
        summary: "mesh and crossbar under open-loop message load on 4B links",
        text: include_str!("../presets/fig5_synth.toml"),
    },
    Preset {
        name: "fig6_mesh_vs_xbar",
        summary: "mesh against single-stage switches, closed loop",
        text: include_str!("../presets/fig6_mesh_vs_xbar.toml"),
    },
    Preset {
        name: "fig7_small_vs_large",
        summary: "small concentrated mesh against a large mesh, plus a 40-cycle uniform reference",
        text: include_str!("../presets/fig7_small_vs_large.toml"),
    },
    Preset {
        name: "fig8_uber",
        summary: "IQ edges, finite buffers, credits and prioritized vnets",
        text: include_str!("../presets/fig8_uber.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    pub fn load(&self) -> Result<ConfigFile, ConfigError> {
        ConfigFile::parse(self.text)
    }
}
