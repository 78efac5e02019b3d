#pragma once

// Umbrella header.

#include "faultnet/baselines.hpp"
#include "faultnet/channels.hpp"
#include "faultnet/config.hpp"
#include "faultnet/errors.hpp"
#include "faultnet/evaluate.hpp"
#include "faultnet/features.hpp"
#include "faultnet/ingest.hpp"
#include "faultnet/mat5.hpp"
#include "faultnet/model.hpp"
#include "faultnet/nn.hpp"
#include "faultnet/rng.hpp"
#include "faultnet/tensor.hpp"
#include "faultnet/wavelet.hpp"
