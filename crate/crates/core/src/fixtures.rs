//! Embedded copies of the shipped fixture files.
//!
//! Everything the engine needs to run offline is compiled in: the two
//! environment profiles, their rule manuals, the prompt scaffolding
//! (system instruction and one-shot example), and the reference memory
//! entries. The same files are shipped under `fixtures/` for inspection
//! and for use as starting points when authoring new environments.

pub const ALFWORLD_PROFILE: &str = include_str!("../fixtures/alfworld/profile.toml");
pub const ALFWORLD_MANUAL: &str = include_str!("../fixtures/alfworld/manual.yaml");
pub const ALFWORLD_SYSTEM_INSTRUCTION: &str =
    include_str!("../fixtures/alfworld/system_instruction.txt");
pub const ALFWORLD_ICL_EXAMPLE: &str = include_str!("../fixtures/alfworld/icl_example.txt");

pub const SCIENCEWORLD_PROFILE: &str = include_str!("../fixtures/scienceworld/profile.toml");
pub const SCIENCEWORLD_MANUAL: &str = include_str!("../fixtures/scienceworld/manual.yaml");
pub const SCIENCEWORLD_SYSTEM_INSTRUCTION: &str =
    include_str!("../fixtures/scienceworld/system_instruction.txt");
pub const SCIENCEWORLD_ICL_EXAMPLE: &str =
    include_str!("../fixtures/scienceworld/icl_example.txt");

/// Reference memory entries, one JSON object per line.
pub const APPENDIX_ENTRIES: &str = include_str!("../fixtures/appendix_entries.jsonl");
