import { ApiClient } from './api';
import { ReviewApp } from './app';

const root = document.getElementById('app');
if (!root) throw new Error('missing #app mount point');
void new ReviewApp(root, new ApiClient()).start();
