#pragma once

#include "saec/calibration.hpp"
#include "saec/codec.hpp"
#include "saec/complexity.hpp"
#include "saec/error.hpp"
#include "saec/image.hpp"
#include "saec/policy.hpp"
#include "saec/quant.hpp"
#include "saec/scheduler.hpp"
#include "saec/simharness.hpp"
