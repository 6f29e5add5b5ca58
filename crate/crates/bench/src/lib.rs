// SPDX-License-Identifier: Apache-2.0

//! Criterion benchmarks for the training engine live in `benches/`.
