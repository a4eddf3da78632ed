"""MRI student: MAE encoder, adapter and classification head."""

from app.kd.student.model import StudentClassifier, build_student, load_student
from app.kd.student.trainer import finetune_student, predict_volumes, student_predict
