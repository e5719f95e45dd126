#pragma once

#include "gtb/calibrate.hpp"
#include "gtb/campaign.hpp"
#include "gtb/device.hpp"
#include "gtb/error.hpp"
#include "gtb/metrics.hpp"
#include "gtb/model.hpp"
#include "gtb/report.hpp"
#include "gtb/spec_db.hpp"
#include "gtb/store.hpp"
#include "gtb/telemetry.hpp"
#include "gtb/workload.hpp"
