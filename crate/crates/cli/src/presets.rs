//! Shipped configurations, embedded at build time.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Bench,
    Theory,
}

pub const PRESETS: &[(&str, PresetKind, &str)] = &[
    ("fig1", PresetKind::Bench, include_str!("../presets/fig1.cfg")),
    ("fig2", PresetKind::Theory, include_str!("../presets/fig2.cfg")),
    ("fig3", PresetKind::Bench, include_str!("../presets/fig3.cfg")),
    ("fig4", PresetKind::Bench, include_str!("../presets/fig4.cfg")),
    ("fig5", PresetKind::Bench, include_str!("../presets/fig5.cfg")),
    ("fig6", PresetKind::Bench, include_str!("../presets/fig6.cfg")),
];

pub fn preset(name: &str) -> Option<(PresetKind, &'static str)> {
    PRESETS.iter().find(|(n, _, _)| *n == name).map(|&(_, kind, text)| (kind, text))
}

pub fn names(kind: PresetKind) -> Vec<&'static str> {
    PRESETS.iter().filter(|(_, k, _)| *k == kind).map(|(n, _, _)| *n).collect()
}
