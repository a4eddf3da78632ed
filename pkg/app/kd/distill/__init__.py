"""Label-matched unpaired distillation from the clip teacher."""

from app.kd.distill.losses import KDSchedule, combined_loss, kd_loss
from app.kd.distill.pairing import MatchedPair, pair_by_label
from app.kd.distill.trainer import distill_train, init_student
