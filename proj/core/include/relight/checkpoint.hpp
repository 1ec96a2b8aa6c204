#pragma once

#include <string>

#include "relight/train.hpp"

namespace relight {

// Versioned binary container ("RLGC"). Round-trips the full TrainState
// bit-exactly: config, scene, network parameters, Adam moments, iteration,
// stage, seed, gradient statistics, and the cue cache, so a resumed run
// replays identically to an uninterrupted one.
void checkpoint_save(const TrainState& state, const std::string& path);
TrainState checkpoint_load(const std::string& path);

}  // namespace relight
