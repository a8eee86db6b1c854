import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'PoseLift.settings')
django.setup()
