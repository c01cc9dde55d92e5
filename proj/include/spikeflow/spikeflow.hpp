#pragma once

// Umbrella header for the full library: tensors with reverse-mode autodiff,
// event encoding and synthesis, the hybrid spiking/analog flow network,
// self-supervised losses, training, and evaluation/energy reporting.

#include "spikeflow/errors.hpp"
#include "spikeflow/tensor.hpp"
#include "spikeflow/ops.hpp"
#include "spikeflow/io.hpp"
#include "spikeflow/events.hpp"
#include "spikeflow/snn.hpp"
#include "spikeflow/network.hpp"
#include "spikeflow/loss.hpp"
#include "spikeflow/trainer.hpp"
#include "spikeflow/eval.hpp"
