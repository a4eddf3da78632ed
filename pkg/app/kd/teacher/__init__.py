"""R(2+1)D clip teacher: construction, training, inference and freezing."""

from app.kd.teacher.freeze import FrozenTeacher, freeze
from app.kd.teacher.model import (
    TeacherNetwork,
    build_teacher,
    import_backbone_weights,
)
from app.kd.teacher.trainer import load_teacher, predict_clips, teacher_predict, train_teacher
