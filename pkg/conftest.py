"""
Корень проекта добавляется в sys.path, чтобы тесты импортировали models/modules/ui как в main.py
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
