#pragma once

#include "walshrec/config.hpp"
#include "walshrec/estimation.hpp"
#include "walshrec/fit.hpp"
#include "walshrec/reconstruct.hpp"
#include "walshrec/rng.hpp"
#include "walshrec/scenario.hpp"
#include "walshrec/sensor.hpp"
#include "walshrec/walsh.hpp"
#include "walshrec/waveform.hpp"
