#include <stdio.h>
#include "physgp.h"

int main(void) {
    PhysgpConfig *cfg = physgp_config_new();
    double y = 0.0, kappa = 0.0;
    if (physgp_deflection(cfg, 125000.0, 450.0, 8e11, 1250.0, &y) != PHYSGP_STATUS_OK) {
        return 1;
    }
    if (physgp_curvature(cfg, 125000.0, 450.0, 8e11, 1250.0, &kappa) != PHYSGP_STATUS_OK) {
        return 1;
    }
    if (physgp_deflection(cfg, 125000.0, 450.0, 8e11, -5.0, &y) != PHYSGP_STATUS_DOMAIN) {
        return 1;
    }
    printf("%.6e %s\n", kappa, physgp_last_error_message());
    physgp_config_free(cfg);
    return 0;
}
