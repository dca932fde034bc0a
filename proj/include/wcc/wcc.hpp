#pragma once

#include "wcc/backbone.hpp"
#include "wcc/bench.hpp"
#include "wcc/checkpoint.hpp"
#include "wcc/cmrf.hpp"
#include "wcc/complexity.hpp"
#include "wcc/config.hpp"
#include "wcc/data.hpp"
#include "wcc/gradcheck.hpp"
#include "wcc/layers.hpp"
#include "wcc/macs.hpp"
#include "wcc/offset_recovery.hpp"
#include "wcc/ops.hpp"
#include "wcc/synth.hpp"
#include "wcc/tensor.hpp"
#include "wcc/train.hpp"
#include "wcc/wavelet.hpp"
