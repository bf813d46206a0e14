from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Detection',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('pipeline', models.CharField(db_index=True, max_length=32)),
                ('area_id', models.CharField(db_index=True, max_length=64)),
                ('class_name', models.CharField(max_length=64)),
                ('confidence', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('discarded_at', models.DateTimeField(blank=True, null=True)),
                ('discard_reason', models.CharField(blank=True, default='', max_length=32)),
                ('image_id', models.CharField(max_length=128)),
                ('record_index', models.PositiveIntegerField()),
                ('source', models.CharField(choices=[('sam3', 'sam3'), ('yoloe', 'yoloe'), ('obj365_nano', 'obj365_nano'), ('safety_nano', 'safety_nano'), ('ocr', 'ocr')], max_length=16)),
                ('verdict', models.CharField(choices=[('unverified', 'unverified'), ('accepted', 'accepted'), ('rejected', 'rejected')], default='unverified', max_length=16)),
                ('box2d', models.JSONField()),
                ('mask', models.CharField(blank=True, default='', max_length=255)),
            ],
            options={
                'ordering': ['pipeline', 'record_index'],
                'abstract': False,
                'base_manager_name': 'all_objects',
                'default_manager_name': 'objects',
            },
        ),
        migrations.CreateModel(
            name='Instance',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('pipeline', models.CharField(db_index=True, max_length=32)),
                ('area_id', models.CharField(db_index=True, max_length=64)),
                ('class_name', models.CharField(max_length=64)),
                ('confidence', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('discarded_at', models.DateTimeField(blank=True, null=True)),
                ('discard_reason', models.CharField(blank=True, default='', max_length=32)),
                ('instance_id', models.CharField(max_length=96)),
                ('subarea_id', models.CharField(blank=True, default='', max_length=64)),
                ('centroid', models.JSONField()),
                ('box', models.JSONField(null=True)),
                ('point_count', models.PositiveIntegerField(default=0)),
                ('observations', models.JSONField(default=list)),
            ],
            options={
                'ordering': ['pipeline', 'instance_id'],
                'abstract': False,
                'base_manager_name': 'all_objects',
                'default_manager_name': 'objects',
            },
        ),
        migrations.AddConstraint(
            model_name='detection',
            constraint=models.UniqueConstraint(fields=('pipeline', 'record_index'), name='unique_detection_per_pipeline'),
        ),
        migrations.AddConstraint(
            model_name='instance',
            constraint=models.UniqueConstraint(fields=('pipeline', 'instance_id'), name='unique_instance_per_pipeline'),
        ),
    ]
