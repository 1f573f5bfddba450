#pragma once

#include "wlanfp/error.hpp"
#include "wlanfp/phy_frames.hpp"
#include "wlanfp/dsss_modem.hpp"
#include "wlanfp/world.hpp"
#include "wlanfp/channel_sim.hpp"
#include "wlanfp/receiver.hpp"
#include "wlanfp/radiomap.hpp"
#include "wlanfp/svm.hpp"
#include "wlanfp/eval.hpp"
