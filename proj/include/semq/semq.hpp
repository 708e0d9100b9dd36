#pragma once

#include "semq/analytics.hpp"
#include "semq/channel.hpp"
#include "semq/core.hpp"
#include "semq/io.hpp"
#include "semq/losses.hpp"
#include "semq/mixture.hpp"
#include "semq/pipeline.hpp"
#include "semq/quantizer.hpp"
#include "semq/rng.hpp"
#include "semq/simulate.hpp"
#include "semq/train.hpp"
