#pragma once

#include "tactile/channel.hpp"
#include "tactile/codebook.hpp"
#include "tactile/decoder.hpp"
#include "tactile/encoder.hpp"
#include "tactile/error.hpp"
#include "tactile/harness.hpp"
#include "tactile/random.hpp"
#include "tactile/sensor.hpp"
#include "tactile/system.hpp"
#include "tactile/waveform.hpp"
