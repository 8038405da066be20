import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'aim_lab.settings')
django.setup()
