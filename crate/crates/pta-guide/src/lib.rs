//! Placeholder; chapters are attached once written.
